#ifndef SEGP_SEGP_PRIOR_HPP
#define SEGP_SEGP_PRIOR_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "segp/linalg.hpp"
#include "segp/stable_lti.hpp"

namespace segp {

/// Strictly increasing, non-negative time points.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> points);

  /// start, start + period, ..., count points.
  static TimeGrid uniform(int count, double period, double start = 0.0);

  int size() const { return static_cast<int>(points_.size()); }
  bool empty() const { return points_.empty(); }
  double operator[](int i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& points() const { return points_; }

 private:
  std::vector<double> points_;
};

/// Vector-valued GP over the input u(t), with p channels.
struct InputGp {
  int dim = 1;
  std::function<Vector(double)> mean_fn;
  std::function<Matrix(double, double)> cov_fn;
  std::string descriptor;

  /// Scalar input: mean slope * t, squared-exponential covariance.
  static InputGp linear_mean_se(double slope, double variance, double lengthscale);
  /// Independent channels, channel c: mean slopes[c] * t + offsets[c], SE covariance.
  static InputGp independent_se(const Vector& slopes, const Vector& offsets,
                                const Vector& variances, const Vector& lengthscales);
};

/// Gaussian over a vector process on a grid, dimension-major:
/// index(j, i) = j * N + i for output dimension j and time i.
struct GaussianOverGrid {
  Vector mean;
  Matrix cov;
  TimeGrid grid;
  int dim = 0;

  int index(int j, int i) const { return j * grid.size() + i; }
  int size() const { return static_cast<int>(mean.size()); }
  /// Throws std::invalid_argument when shapes disagree with grid and dim.
  void validate_shapes() const;
};

struct QuadratureConfig {
  double fine_step = 1e-2;
};

/// variance * exp(-0.5 (t - t2)^2 / lengthscale^2)
double se_input_kernel(double t, double t2, double variance, double lengthscale);

/// C e^{A (t - s)} B, requires t >= s.
Matrix greens_c(double t, double s, const LtiSystem& sys);

Vector prior_mean(double t, const LtiSystem& sys, const InputGp& u, const QuadratureConfig& quad);
Matrix prior_cov(double t, double t2, const LtiSystem& sys, const InputGp& u,
                 const QuadratureConfig& quad);

/// Mean and covariance of y over the grid, symmetrized but without jitter.
GaussianOverGrid assemble_prior(const TimeGrid& grid, const LtiSystem& sys, const InputGp& u,
                                const QuadratureConfig& quad);

/// assemble_prior plus a factorization check with the shared jitter ladder.
/// Throws NumericalError if the covariance cannot be factored.
GaussianOverGrid prior_over_grid(const TimeGrid& grid, const LtiSystem& sys, const InputGp& u,
                                 const QuadratureConfig& quad);

/// Input statistics on the quadrature grid 0, h, ..., (M-1) h covering a
/// time grid, plus the fine index of every grid point.
struct FineInput {
  double step = 0.0;
  int count = 0;             // M
  std::vector<int> index;    // fine index of each grid time
  Vector mean;               // p*M, channel-major
  Matrix gram;               // pM x pM
};

FineInput discretize_input(const TimeGrid& grid, const InputGp& u, const QuadratureConfig& quad);

/// The prior as a linear map of the initial state and of the fine-grid input:
///   y(T) = H0 x(0) + H u(fine),
/// so m_y = H0 m_x0 + H m_u and K_y = H0 Sigma_x0 H0^T + H K_u H^T.
/// Rows of H apply composite trapezoidal weights to the Green's function and
/// add the D feed-through at each grid time. All five covariance terms follow
/// from this one factorization.
///
/// Keeps the cached powers e^{A k h} so that a loss gradient with respect to
/// (m_y, K_y) can be pulled back to A.
class PriorOperator {
 public:
  PriorOperator(const TimeGrid& grid, const LtiSystem& sys,
                std::shared_ptr<const FineInput> input);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  GaussianOverGrid gaussian() const;

  /// dLoss/dA given dLoss/dmean and a symmetric dLoss/dcov.
  Matrix backward(const Vector& grad_mean, const Matrix& grad_cov) const;

 private:
  TimeGrid grid_;
  std::shared_ptr<const FineInput> input_;
  Matrix a_, b_, c_, d_, m_x0_, sigma_x0_;
  std::vector<Matrix> powers_;  // e^{A k h}, k = 0..M-1
  Matrix h0_;
  Matrix h_;
  Matrix h_gram_;  // H K_u
  Vector mean_;
  Matrix cov_;

  double trapezoid_weight(int k, int upper) const;
};

}  // namespace segp

#endif  // SEGP_SEGP_PRIOR_HPP
