#ifndef SEGP_VAE_HPP
#define SEGP_VAE_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "segp/gp_infer.hpp"
#include "segp/linalg.hpp"
#include "segp/segp_prior.hpp"
#include "segp/simulator.hpp"
#include "segp/stable_lti.hpp"

namespace segp {

/// Layer sizes. The feature extractor is a two-layer dense network producing a
/// single feature map of feature_grid x feature_grid cells.
struct ModelShape {
  int canvas = 40;
  int feature_grid = 10;
  int encoder_hidden = 256;
  int decoder_hidden = 500;
  int latent_dim = 2;
  int state_dim = 2;
  double temperature = 1.0;  // spatial softmax, fixed during training

  void validate() const;
  int pixels() const { return canvas * canvas; }
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 2.0;
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kPolarOriginRadius = 1e-6;
/// Relative diagonal jitter kept on both Gaussians inside the KL term and on
/// the posterior before the reparameterisation factor.
inline constexpr double kStandingJitter = 1e-4;

struct EncoderParams {
  Matrix w1;  // hidden x d^2
  Matrix b1;  // hidden x 1
  Matrix w2;  // G^2 x hidden
  Matrix b2;  // G^2 x 1
  Matrix head_scale;  // m x 1
  Matrix head_bias;   // m x 1
  Matrix logvar;      // m x 1, clamped to [kLogVarMin, kLogVarMax] when realized
  double temperature = 1.0;
};

struct DecoderParams {
  Matrix w1;  // hidden x m
  Matrix b1;
  Matrix w2;  // d^2 x hidden
  Matrix b2;
};

/// Every trainable tensor. The SEGP part stores the raw (V1, V2, V3) values;
/// B, C, D and the initial-state Gaussian live in ModelContext.
struct ModelParams {
  ModelShape shape;
  EncoderParams enc;
  DecoderParams dec;
  Matrix v1_raw;
  Matrix v2_raw;
  Matrix v3_raw;

  /// Fixed order used by the optimizer, the checkpoint and gradient checks.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  /// Same shapes, all zeros.
  ModelParams zeros_like() const;
  /// "encoder", "decoder" or "segp" for a tensor name.
  static std::string group_of(const std::string& tensor_name);
};

/// Fixed, non-trainable part of the model.
struct ModelContext {
  TimeGrid grid;
  std::shared_ptr<const FineInput> input;
  Matrix b;
  Matrix c;
  Matrix d;
  Vector m_x0;
  Matrix sigma_x0;
  Vector scales;  // one per latent dimension

  static ModelContext from_dataset(const DatasetConfig& cfg, const QuadratureConfig& quad,
                                   Vector scales);
  int frames() const { return grid.size(); }
  int latent_dim() const { return static_cast<int>(c.rows()); }
};

/// The SEGP prior over the grid for the current parameters.
struct SegpPrior {
  StableLtiParams lti;
  StateMatrix state;
  std::shared_ptr<const PriorOperator> op;

  GaussianOverGrid gaussian() const { return op->gaussian(); }
};

SegpPrior build_prior(const ModelParams& params, const ModelContext& ctx);

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
};

/// Softmax(f / tau)-weighted mean of normalized cell centres. Cell (row, col)
/// sits at x = -1 + 2 col / (W - 1), y = -1 + 2 row / (H - 1); `fmap` is row-major.
Keypoint spatial_softmax(const Vector& fmap, int height, int width, double tau);

struct Polar {
  double r = 0.0;
  double theta = 0.0;
};

/// theta = atan2(y, x) in (-pi, pi], with theta = 0 within kPolarOriginRadius
/// of the origin.
Polar to_polar(double x, double y);

/// theta'_t = theta_t + 2 pi sum_{i<=t} round((theta_{i-1} - theta_i) / 2 pi).
std::vector<double> unwrap(const std::vector<double>& theta);

/// Per-frame encoder output, dimension-major over the grid.
struct EncodedSequence {
  TimeGrid grid;
  int dim = 0;
  Vector mean;
  Vector variance;
};

/// `frames` holds one flattened frame per column (d^2 x N).
EncodedSequence encode_sequence(const Matrix& frames, const TimeGrid& grid,
                                const ModelParams& params);
EncodedSequence encode_sequence(const VideoSequence& video, const ModelParams& params);

/// Pixel probabilities for one latent vector. The likelihood clamps them to
/// [kProbClamp, 1 - kProbClamp].
Vector decode(const Vector& y, const ModelParams& params);

double bernoulli_log_likelihood(const Vector& frame, const Vector& probs);

/// Conditions the prior on the encoder pseudo-observations.
GaussianOverGrid variational_posterior(const EncodedSequence& enc, const GaussianOverGrid& prior);

/// mean + L eps with L the (jittered) Cholesky factor of the covariance.
Vector reparam_sample(const GaussianOverGrid& posterior, const Vector& eps);

struct LossSettings {
  double beta = 2.5;
  double lambda = 0.0;
  KlOrder kl_order = KlOrder::kPosteriorPrior;
};

struct LossTerms {
  double loss = 0.0;
  double recon = 0.0;  // -sum of Bernoulli log-likelihoods
  double kl = 0.0;     // unweighted, feature-scaled
  double l1 = 0.0;     // ||A||_1
};

/// Loss of one video (frames d^2 x N) given a prior built for the same
/// parameters. An empty `eps` uses the posterior mean. When `grad` is
/// non-null, adds dLoss/dparams to it (including the SEGP path).
LossTerms video_loss(const Matrix& frames, const ModelParams& params, const SegpPrior& prior,
                     const ModelContext& ctx, const LossSettings& settings, const Vector& eps,
                     ModelParams* grad);

/// Mean of video_loss over a batch, sharing one prior and one reverse pass
/// through it.
LossTerms batch_loss(const std::vector<Matrix>& frames, const std::vector<Vector>& eps,
                     const ModelParams& params, const ModelContext& ctx,
                     const LossSettings& settings, ModelParams* grad);

/// Posterior and prior marginals for one video.
struct PosteriorSummary {
  GaussianOverGrid prior;
  GaussianOverGrid posterior;
  EncodedSequence encoded;
};

/// `variance_override` > 0 replaces every encoder variance.
PosteriorSummary infer_posterior(const Matrix& frames, const ModelParams& params,
                                 const SegpPrior& prior, const ModelContext& ctx,
                                 double variance_override = 0.0);

}  // namespace segp

#endif  // SEGP_VAE_HPP
