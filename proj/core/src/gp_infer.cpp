#include "segp/gp_infer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace segp {

namespace {

std::vector<int> locate(const TimeGrid& within, const TimeGrid& sub) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(sub.size()));
  for (double t : sub.points()) {
    int found = -1;
    for (int i = 0; i < within.size(); ++i) {
      if (std::abs(within[i] - t) <= 1e-9) {
        found = i;
        break;
      }
    }
    if (found < 0) {
      std::ostringstream msg;
      msg << "condition: time " << t << " is not on the prior grid";
      throw std::invalid_argument(msg.str());
    }
    out.push_back(found);
  }
  return out;
}

std::vector<Eigen::Index> flat_indices(const std::vector<int>& times, int dim, int grid_size) {
  std::vector<Eigen::Index> out;
  out.reserve(times.size() * static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    for (int i : times) out.push_back(static_cast<Eigen::Index>(j) * grid_size + i);
  }
  return out;
}

}  // namespace

GaussianOverGrid condition(const GaussianOverGrid& prior, const Vector& obs_mean,
                           const NoiseModel& obs_noise, const TimeGrid& observed,
                           const TimeGrid& targets) {
  prior.validate_shapes();
  const int dim = prior.dim;
  const auto obs_idx = flat_indices(locate(prior.grid, observed), dim, prior.grid.size());
  const auto tgt_idx = flat_indices(locate(prior.grid, targets), dim, prior.grid.size());
  const auto n_obs = static_cast<Eigen::Index>(obs_idx.size());
  if (obs_mean.size() != n_obs || obs_noise.variances.size() != n_obs) {
    throw std::invalid_argument("condition: observation size mismatch");
  }
  if ((obs_noise.variances.array() <= 0.0).any()) {
    throw std::invalid_argument("condition: observation noise must be positive");
  }

  GaussianOverGrid out;
  out.grid = targets;
  out.dim = dim;
  out.mean = prior.mean(tgt_idx);
  out.cov = prior.cov(tgt_idx, tgt_idx);
  if (n_obs == 0) return out;

  Matrix s = prior.cov(obs_idx, obs_idx);
  s.diagonal() += obs_noise.variances;
  const CholeskyFactor chol = jittered_cholesky(symmetrize(s));
  const Matrix k_to = prior.cov(tgt_idx, obs_idx);
  const Vector resid = obs_mean - prior.mean(obs_idx);
  out.mean += k_to * chol.solve(resid);
  out.cov -= k_to * chol.solve(Matrix(k_to.transpose()));
  out.cov = symmetrize(out.cov);
  return out;
}

SameGridPosterior condition_same_grid(const Vector& prior_mean, const Matrix& prior_cov,
                                      const Vector& obs_mean, const Vector& noise_var) {
  Matrix s = prior_cov;
  s.diagonal() += noise_var;
  SameGridPosterior out;
  out.s_factor = jittered_cholesky(s);
  out.alpha = out.s_factor.solve(Vector(obs_mean - prior_mean));
  out.w = out.s_factor.solve(prior_cov);
  out.mean = prior_mean + prior_cov * out.alpha;
  out.cov = symmetrize(prior_cov - prior_cov * out.w);
  return out;
}

SameGridPosteriorGradient condition_same_grid_backward(const SameGridPosterior& post,
                                                       const Vector& grad_mean,
                                                       const Matrix& grad_cov) {
  const Eigen::Index n = post.mean.size();
  const Matrix& w = post.w;
  const Vector beta = w * grad_mean;  // S^{-1} K g

  SameGridPosteriorGradient out;
  out.obs_mean = beta;
  out.prior_mean = grad_mean - beta;

  const Matrix i_minus_w = Matrix::Identity(n, n) - w;
  const Matrix wgw = w * grad_cov * w.transpose();
  Matrix gk = i_minus_w * grad_cov * i_minus_w.transpose();
  gk += grad_mean * post.alpha.transpose() - beta * post.alpha.transpose();
  out.prior_cov = symmetrize(gk);
  out.noise_var = wgw.diagonal() - beta.cwiseProduct(post.alpha);
  return out;
}

double gaussian_kl(const Vector& mean_p, const Matrix& cov_p, const Vector& mean_q,
                   const Matrix& cov_q) {
  const Eigen::Index k = mean_p.size();
  if (mean_q.size() != k || cov_p.rows() != k || cov_q.rows() != k) {
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  }
  const CholeskyFactor lp = jittered_cholesky(cov_p);
  const CholeskyFactor lq = jittered_cholesky(cov_q);
  const Matrix m = lq.lower.triangularView<Eigen::Lower>().solve(lp.lower);
  const Vector z = lq.lower.triangularView<Eigen::Lower>().solve(Vector(mean_q - mean_p));
  const double value = 0.5 * (m.squaredNorm() + z.squaredNorm() - static_cast<double>(k) +
                              lq.log_determinant() - lp.log_determinant());
  return value;
}

double gaussian_kl(const GaussianOverGrid& p, const GaussianOverGrid& q) {
  return gaussian_kl(p.mean, p.cov, q.mean, q.cov);
}

KlGradient gaussian_kl_with_gradient(const Vector& mean_p, const Matrix& cov_p,
                                     const Vector& mean_q, const Matrix& cov_q) {
  KlGradient out;
  out.value = gaussian_kl(mean_p, cov_p, mean_q, cov_q);
  const CholeskyFactor lp = jittered_cholesky(cov_p);
  const CholeskyFactor lq = jittered_cholesky(cov_q);
  const Matrix q_inv = lq.inverse();
  const Matrix p_inv = lp.inverse();
  const Vector d = mean_q - mean_p;
  const Vector q_inv_d = q_inv * d;
  out.mean_q = q_inv_d;
  out.mean_p = -q_inv_d;
  out.cov_p = symmetrize(0.5 * (q_inv - p_inv));
  out.cov_q = symmetrize(0.5 * (q_inv - q_inv * cov_p * q_inv - q_inv_d * q_inv_d.transpose()));
  return out;
}

GaussianOverGrid rescale(const GaussianOverGrid& g, const ScaleVector& scales) {
  g.validate_shapes();
  if (scales.scales.size() != g.dim || (scales.scales.array() <= 0.0).any()) {
    throw std::invalid_argument("rescale: need one positive scale per dimension");
  }
  const int n = g.grid.size();
  Vector per_entry(g.size());
  for (int j = 0; j < g.dim; ++j) per_entry.segment(j * n, n).setConstant(1.0 / scales.scales(j));
  GaussianOverGrid out = g;
  out.mean = g.mean.cwiseProduct(per_entry);
  out.cov = per_entry.asDiagonal() * g.cov * per_entry.asDiagonal();
  return out;
}

double scaled_kl(const GaussianOverGrid& p, const GaussianOverGrid& q, const ScaleVector& scales) {
  return gaussian_kl(rescale(p, scales), rescale(q, scales));
}

GaussianOverGrid se_baseline_prior(const TimeGrid& grid, const SeHyper& hyper) {
  if (hyper.variance.size() != hyper.lengthscale.size()) {
    throw std::invalid_argument("se_baseline_prior: hyperparameter size mismatch");
  }
  const int n = grid.size();
  const auto dim = static_cast<int>(hyper.dim());
  GaussianOverGrid out;
  out.grid = grid;
  out.dim = dim;
  out.mean = Vector::Zero(static_cast<Eigen::Index>(dim) * n);
  out.cov = Matrix::Zero(out.mean.size(), out.mean.size());
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < n; ++i) {
      for (int q = 0; q < n; ++q) {
        out.cov(j * n + i, j * n + q) =
            se_input_kernel(grid[i], grid[q], hyper.variance(j), hyper.lengthscale(j));
      }
    }
  }
  return out;
}

LmlGradient log_marginal_likelihood_with_gradient(const SeHyper& hyper, const TimeGrid& grid,
                                                  const Matrix& data, const NoiseModel& noise) {
  const int n = grid.size();
  const auto dim = static_cast<int>(hyper.dim());
  if (data.rows() != static_cast<Eigen::Index>(dim) * n ||
      noise.variances.size() != data.rows()) {
    throw std::invalid_argument("log_marginal_likelihood: data/noise shape mismatch");
  }
  const auto count = static_cast<double>(data.cols());
  LmlGradient out;
  out.log_variance = Vector::Zero(dim);
  out.log_lengthscale = Vector::Zero(dim);
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  // Dimensions are independent, so the evidence factorises over blocks.
  for (int j = 0; j < dim; ++j) {
    Matrix k_se(n, n);
    Matrix dist2(n, n);
    for (int i = 0; i < n; ++i) {
      for (int q = 0; q < n; ++q) {
        const double dt = grid[i] - grid[q];
        dist2(i, q) = dt * dt;
        k_se(i, q) = se_input_kernel(grid[i], grid[q], hyper.variance(j), hyper.lengthscale(j));
      }
    }
    Matrix k = k_se;
    k.diagonal() += noise.variances.segment(j * n, n);
    const CholeskyFactor chol = jittered_cholesky(k);
    const Matrix y = data.middleRows(j * n, n);
    const Matrix alpha = chol.solve(y);
    const double quad = (y.array() * alpha.array()).sum();
    out.value += -0.5 * (quad + count * (chol.log_determinant() + n * log_2pi));

    // dLML/dK = 1/2 (alpha alpha^T - count K^{-1})
    const Matrix g = 0.5 * (alpha * alpha.transpose() - count * chol.inverse());
    const double ls = hyper.lengthscale(j);
    out.log_variance(j) = (g.array() * k_se.array()).sum();
    out.log_lengthscale(j) = (g.array() * k_se.array() * dist2.array()).sum() / (ls * ls);
  }
  return out;
}

double log_marginal_likelihood(const SeHyper& hyper, const TimeGrid& grid, const Matrix& data,
                               const NoiseModel& noise) {
  return log_marginal_likelihood_with_gradient(hyper, grid, data, noise).value;
}

SeFitResult fit_se_baseline(const TimeGrid& grid, const Matrix& data, const NoiseModel& noise,
                            int steps, double step_size) {
  const int n = grid.size();
  const auto dim = static_cast<int>(data.rows() / std::max(n, 1));
  if (data.cols() == 0 || static_cast<Eigen::Index>(dim) * n != data.rows()) {
    throw std::invalid_argument("fit_se_baseline: need dimension-major trajectories");
  }
  Vector log_var(dim);
  Vector log_ls = Vector::Zero(dim);
  for (int j = 0; j < dim; ++j) {
    const double ms = data.middleRows(j * n, n).array().square().mean();
    log_var(j) = std::log(std::max(ms, 1e-6));
  }
  const auto count = static_cast<double>(data.cols());

  // Adam moments over (log_var, log_ls)
  Vector m1 = Vector::Zero(2 * dim);
  Vector m2 = Vector::Zero(2 * dim);
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-8;

  SeFitResult out;
  out.history.reserve(static_cast<std::size_t>(steps) + 1);
  auto hyper_of = [&] {
    return SeHyper{log_var.array().exp().matrix(), log_ls.array().exp().matrix()};
  };
  for (int step = 1; step <= steps; ++step) {
    const LmlGradient g = log_marginal_likelihood_with_gradient(hyper_of(), grid, data, noise);
    out.history.push_back(g.value / count);
    Vector grad(2 * dim);
    grad << g.log_variance / count, g.log_lengthscale / count;
    m1 = b1 * m1 + (1.0 - b1) * grad;
    m2 = b2 * m2 + (1.0 - b2) * grad.cwiseAbs2();
    const Vector m1_hat = m1 / (1.0 - std::pow(b1, step));
    const Vector m2_hat = m2 / (1.0 - std::pow(b2, step));
    const Vector update = step_size * m1_hat.array() / (m2_hat.array().sqrt() + eps);
    log_var += update.head(dim);  // ascent
    log_ls += update.tail(dim);
  }
  out.hyper = hyper_of();
  out.history.push_back(log_marginal_likelihood(out.hyper, grid, data, noise) / count);
  return out;
}

}  // namespace segp
