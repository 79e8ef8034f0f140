#ifndef SEGP_TEST_ORACLES_HPP
#define SEGP_TEST_ORACLES_HPP

#include <cmath>
#include <functional>

#include "segp/rng.hpp"
#include "segp/simulator.hpp"

namespace segp::testing {

/// Monte-Carlo draws of y over `grid` (dimension-major, one column per
/// trajectory). Inputs are sampled on a fine grid of step `dt`, states are
/// integrated with `substeps` Euler substeps per fine step, and observation
/// noise of variance `noise_var` is added.
inline Matrix simulate_outputs(const LtiSystem& sys, const InputGp& u, const TimeGrid& grid,
                               double dt, int substeps, double noise_var, int count,
                               std::uint64_t seed) {
  const double horizon = grid[grid.size() - 1];
  const int fine_count = static_cast<int>(std::lround(horizon / dt)) + 1;
  const TimeGrid fine = TimeGrid::uniform(fine_count, dt);
  const GpSampler sampler(u, fine);
  const Matrix x0_lower = semidefinite_cholesky(sys.sigma_x0);
  const int m = static_cast<int>(sys.output_dim());
  const int n = grid.size();
  const Eigen::Index p = sys.input_dim();
  Matrix out(static_cast<Eigen::Index>(m) * n, count);
  const double sd = std::sqrt(noise_var);
  for (int k = 0; k < count; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    const Vector x0 = sys.m_x0 + x0_lower * rng.normal_vector(sys.state_dim());
    const Vector uf = sampler.draw(rng);
    const Matrix states = euler_integrate(sys, uf, x0, dt, substeps);
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<Eigen::Index>(std::lround(grid[i] / dt));
      Vector ui(p);
      for (Eigen::Index c = 0; c < p; ++c) ui(c) = uf(c * fine_count + idx);
      const Vector y = sys.c * states.col(idx) + sys.d * ui;
      for (int j = 0; j < m; ++j) out(j * n + i, k) = y(j) + sd * rng.normal();
    }
  }
  return out;
}

struct SampleMoments {
  Vector mean;
  Vector mean_se;
  Matrix cov;
  Matrix cov_se;
};

/// Sample mean and covariance with their standard errors; the covariance SE
/// uses the sample variance of the centred products.
inline SampleMoments sample_moments(const Matrix& draws) {
  const Eigen::Index d = draws.rows();
  const double k = static_cast<double>(draws.cols());
  SampleMoments s;
  s.mean = draws.rowwise().mean();
  const Matrix c = draws.colwise() - s.mean;
  s.mean_se = (c.array().square().rowwise().sum() / (k - 1.0) / k).sqrt().matrix();
  s.cov = c * c.transpose() / (k - 1.0);
  s.cov_se.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Eigen::ArrayXd prod = c.row(i).array() * c.row(j).array();
      const double var = (prod - prod.mean()).square().sum() / (k - 1.0);
      s.cov_se(i, j) = s.cov_se(j, i) = std::sqrt(var / k);
    }
  }
  return s;
}

/// Central difference of a scalar function of one matrix entry.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h);
}

}  // namespace segp::testing

#endif  // SEGP_TEST_ORACLES_HPP
