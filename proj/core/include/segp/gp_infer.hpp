#ifndef SEGP_GP_INFER_HPP
#define SEGP_GP_INFER_HPP

#include <vector>

#include "segp/linalg.hpp"
#include "segp/segp_prior.hpp"

namespace segp {

/// Per-dimension-per-time observation variances (diagonal, dimension-major).
struct NoiseModel {
  Vector variances;

  static NoiseModel uniform(Eigen::Index size, double variance) {
    return NoiseModel{Vector::Constant(size, variance)};
  }
};

/// Positive per-dimension normalisation constants.
struct ScaleVector {
  Vector scales;
};

enum class KlOrder {
  kPosteriorPrior,  ///< KL(Q || P), the usual negative-ELBO term
  kPriorPosterior,  ///< KL(P || Q)
};

/// Predictive distribution on `targets` given noisy observations on
/// `observed`. Both grids must be subsets of prior.grid.
GaussianOverGrid condition(const GaussianOverGrid& prior, const Vector& obs_mean,
                           const NoiseModel& obs_noise, const TimeGrid& observed,
                           const TimeGrid& targets);

/// Conditioning with observations on the prior's own grid, keeping the
/// intermediates needed for the reverse pass.
struct SameGridPosterior {
  Vector mean;
  Matrix cov;
  CholeskyFactor s_factor;  // K + Sigma
  Vector alpha;             // (K + Sigma)^{-1} (y - m)
  Matrix w;                 // (K + Sigma)^{-1} K
};

SameGridPosterior condition_same_grid(const Vector& prior_mean, const Matrix& prior_cov,
                                      const Vector& obs_mean, const Vector& noise_var);

struct SameGridPosteriorGradient {
  Vector prior_mean;
  Matrix prior_cov;  // symmetric
  Vector obs_mean;
  Vector noise_var;
};

SameGridPosteriorGradient condition_same_grid_backward(const SameGridPosterior& post,
                                                       const Vector& grad_mean,
                                                       const Matrix& grad_cov);

/// KL(p || q) for multivariate Gaussians, through Cholesky factors.
double gaussian_kl(const Vector& mean_p, const Matrix& cov_p, const Vector& mean_q,
                   const Matrix& cov_q);
double gaussian_kl(const GaussianOverGrid& p, const GaussianOverGrid& q);

struct KlGradient {
  double value = 0.0;
  Vector mean_p;
  Matrix cov_p;
  Vector mean_q;
  Matrix cov_q;
};

/// KL(p || q) together with its gradient with respect to both Gaussians.
KlGradient gaussian_kl_with_gradient(const Vector& mean_p, const Matrix& cov_p,
                                     const Vector& mean_q, const Matrix& cov_q);

/// Divides dimension j of the mean by s_j and the (j, l) covariance block by
/// s_j s_l.
GaussianOverGrid rescale(const GaussianOverGrid& g, const ScaleVector& scales);

double scaled_kl(const GaussianOverGrid& p, const GaussianOverGrid& q, const ScaleVector& scales);

/// Independent squared-exponential kernel per output dimension.
struct SeHyper {
  Vector variance;
  Vector lengthscale;

  Eigen::Index dim() const { return variance.size(); }
};

/// Zero mean, block-diagonal across dimensions.
GaussianOverGrid se_baseline_prior(const TimeGrid& grid, const SeHyper& hyper);

/// Sum over trajectories (columns of `data`, dimension-major) of the zero-mean
/// Gaussian log evidence under K + Sigma.
double log_marginal_likelihood(const SeHyper& hyper, const TimeGrid& grid, const Matrix& data,
                               const NoiseModel& noise);

struct LmlGradient {
  double value = 0.0;
  Vector log_variance;
  Vector log_lengthscale;
};

LmlGradient log_marginal_likelihood_with_gradient(const SeHyper& hyper, const TimeGrid& grid,
                                                  const Matrix& data, const NoiseModel& noise);

struct SeFitResult {
  SeHyper hyper;
  std::vector<double> history;  // per-trajectory average log evidence per step
};

/// Gradient ascent on log-hyperparameters with Adam-normalised steps.
SeFitResult fit_se_baseline(const TimeGrid& grid, const Matrix& data, const NoiseModel& noise,
                            int steps = 500, double step_size = 1e-2);

}  // namespace segp

#endif  // SEGP_GP_INFER_HPP
