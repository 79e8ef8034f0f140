#ifndef SEGP_TRAIN_HPP
#define SEGP_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "segp/gp_infer.hpp"
#include "segp/rng.hpp"
#include "segp/simulator.hpp"
#include "segp/vae.hpp"

namespace segp {

struct TrainConfig {
  double learning_rate = 5e-3;
  double weight_decay = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double beta = 2.5;
  double lambda_start = 0.025;
  double lambda_end = 0.3;
  int epochs = 40;
  int batch_size = 32;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  bool gradient_check = true;
  KlOrder kl_order = KlOrder::kPosteriorPrior;
  int eval_train_videos = 200;  // size of the training subset scored each epoch
  double v2_init_std = 1e-3;
  double logvar_init = -2.0;

  void validate() const;
  /// Linear from lambda_start (first epoch) to lambda_end (last epoch);
  /// `epoch` is 1-based, 0 means the init evaluation.
  double lambda_at(int epoch) const;
};

struct TrainState {
  ModelParams params;
  ModelParams first_moment;
  ModelParams second_moment;
  std::int64_t step = 0;
  int epoch = 0;
  Rng rng;
};

/// Decoupled weight decay:
///   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p).
void adamw_step(TrainState& state, const ModelParams& grad, const TrainConfig& cfg);

/// Kaiming-normal dense weights (std sqrt(2 / fan_in)), zero biases, unit
/// affine head, V1 = I, V3 = 0 and V2 ~ N(0, v2_init_std^2).
TrainState init_params(const ModelShape& shape, const TrainConfig& cfg, std::uint64_t seed);

/// Per-dimension max |latent| over the given trajectories.
Vector latent_scales(const Dataset& data, const std::vector<int>& indices);

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};
SplitIndices split_dataset(int count, double train_fraction);

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double recon_per_pixel = 0.0;
  double kl_unweighted = 0.0;
  double l1_a = 0.0;
  double loss = 0.0;
};

/// Posterior-mean scores averaged over `indices`.
EpochMetrics evaluate_split(const ModelParams& params, const ModelContext& ctx,
                            const Dataset& data, const std::vector<int>& indices,
                            const LossSettings& settings);

struct GradientCheckResult {
  bool passed = true;
  std::map<std::string, double> worst_ratio;  // per group: max |a - fd| / tolerance
  std::string detail;
};

struct GradientCheckOptions {
  int frames = 5;
  int canvas = 8;
  int feature_grid = 4;
  int encoder_hidden = 6;
  int decoder_hidden = 6;
  int videos = 2;
  int entries_per_tensor = 24;  // 0 checks every entry
  double step = 1e-6;
  double rel_tol = 1e-4;
  double abs_tol = 1e-7;
};

/// Central finite differences against the analytic gradient of batch_loss
/// on a random mini-instance.
GradientCheckResult gradient_check(std::uint64_t seed, const GradientCheckOptions& opt = {});

struct TrainOptions {
  std::filesystem::path out_dir;
  /// Echoed into the checkpoint.
  std::string config_json;
  std::function<void(const EpochMetrics&)> on_metrics;
};

struct TrainResult {
  TrainState state;
  std::vector<EpochMetrics> metrics;
  std::vector<double> contraction_margins;  // one per logged epoch
  Vector scales;
};

/// Writes metrics.csv, a_history.csv and checkpoint.bin under out_dir.
TrainResult train(const Dataset& data, const ModelShape& shape, const QuadratureConfig& quad,
                  const TrainConfig& cfg, const TrainOptions& options);

struct EvalReport {
  std::vector<double> times;
  std::vector<double> posterior_abs_error;  // angle channel, mean over videos
  std::vector<double> prior_abs_error;
  std::vector<double> posterior_variance;
  std::vector<double> prior_variance;
  double posterior_abs_error_mean = 0.0;
  double prior_abs_error_mean = 0.0;
  double a_spectral_error = 0.0;
  double recon_per_pixel = 0.0;
  Matrix a_learned;
};

/// Angle-channel posterior and prior errors against ground-truth latents,
/// ||A_hat - A||_2 against `true_a`, per-pixel reconstruction error.
EvalReport evaluate(const ModelParams& params, const ModelContext& ctx, const Dataset& data,
                    const std::vector<int>& indices, const Matrix& true_a);

}  // namespace segp

#endif  // SEGP_TRAIN_HPP
