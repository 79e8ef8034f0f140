#include "segp/segp_prior.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace segp {

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i])) throw std::invalid_argument("TimeGrid: non-finite time");
    if (i == 0 && points_[i] < 0.0) throw std::invalid_argument("TimeGrid: negative time");
    if (i > 0 && !(points_[i] > points_[i - 1])) {
      throw std::invalid_argument("TimeGrid: times must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(int count, double period, double start) {
  if (count < 0 || (count > 1 && !(period > 0.0))) {
    throw std::invalid_argument("TimeGrid::uniform: bad count or period");
  }
  std::vector<double> pts(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pts[static_cast<std::size_t>(i)] = start + i * period;
  return TimeGrid(std::move(pts));
}

InputGp InputGp::linear_mean_se(double slope, double variance, double lengthscale) {
  if (!(variance >= 0.0) || !(lengthscale > 0.0)) {
    throw std::invalid_argument("linear_mean_se: need variance >= 0 and lengthscale > 0");
  }
  InputGp u;
  u.dim = 1;
  u.mean_fn = [slope](double t) { return Vector::Constant(1, slope * t); };
  u.cov_fn = [variance, lengthscale](double t, double t2) {
    Matrix k(1, 1);
    const double d = (t - t2) / lengthscale;
    k(0, 0) = variance * std::exp(-0.5 * d * d);
    return k;
  };
  std::ostringstream desc;
  desc.precision(17);
  desc << "mean=linear(slope=" << slope << ") cov=se(variance=" << variance
       << ",lengthscale=" << lengthscale << ")";
  u.descriptor = desc.str();
  return u;
}

InputGp InputGp::independent_se(const Vector& slopes, const Vector& offsets,
                                const Vector& variances, const Vector& lengthscales) {
  const Eigen::Index p = slopes.size();
  if (offsets.size() != p || variances.size() != p || lengthscales.size() != p) {
    throw std::invalid_argument("independent_se: channel count mismatch");
  }
  InputGp u;
  u.dim = static_cast<int>(p);
  u.mean_fn = [slopes, offsets](double t) -> Vector { return slopes * t + offsets; };
  u.cov_fn = [variances, lengthscales](double t, double t2) {
    Matrix k = Matrix::Zero(variances.size(), variances.size());
    for (Eigen::Index c = 0; c < variances.size(); ++c) {
      k(c, c) = se_input_kernel(t, t2, variances(c), lengthscales(c));
    }
    return k;
  };
  u.descriptor = "independent linear-mean SE channels";
  return u;
}

void GaussianOverGrid::validate_shapes() const {
  const Eigen::Index n = static_cast<Eigen::Index>(dim) * grid.size();
  if (mean.size() != n || cov.rows() != n || cov.cols() != n) {
    throw std::invalid_argument("GaussianOverGrid: mean/cov shape does not match dim * N");
  }
}

double se_input_kernel(double t, double t2, double variance, double lengthscale) {
  if (!(variance > 0.0) || !(lengthscale > 0.0)) {
    throw std::invalid_argument("se_input_kernel: hyperparameters must be positive");
  }
  const double d = (t - t2) / lengthscale;
  return variance * std::exp(-0.5 * d * d);
}

Matrix greens_c(double t, double s, const LtiSystem& sys) {
  if (t < s) throw std::invalid_argument("greens_c: requires t >= s");
  return sys.c * matrix_exp(sys.a, t - s) * sys.b;
}

FineInput discretize_input(const TimeGrid& grid, const InputGp& u, const QuadratureConfig& quad) {
  if (!(quad.fine_step > 0.0)) throw std::invalid_argument("fine_step must be positive");
  FineInput out;
  out.step = quad.fine_step;
  out.index.reserve(static_cast<std::size_t>(grid.size()));
  int max_index = 0;
  for (double t : grid.points()) {
    const double ratio = t / quad.fine_step;
    const double k = std::round(ratio);
    if (std::abs(ratio - k) > 1e-6) {
      std::ostringstream msg;
      msg << "fine_step " << quad.fine_step << " does not divide grid time " << t;
      throw std::invalid_argument(msg.str());
    }
    out.index.push_back(static_cast<int>(k));
    max_index = std::max(max_index, static_cast<int>(k));
  }
  const int m = grid.empty() ? 0 : max_index + 1;
  const int p = u.dim;
  out.count = m;
  out.mean = Vector::Zero(static_cast<Eigen::Index>(p) * m);
  out.gram = Matrix::Zero(static_cast<Eigen::Index>(p) * m, static_cast<Eigen::Index>(p) * m);
  for (int k = 0; k < m; ++k) {
    const double sk = k * quad.fine_step;
    const Vector mk = u.mean_fn(sk);
    for (int c = 0; c < p; ++c) out.mean(c * m + k) = mk(c);
    for (int l = 0; l <= k; ++l) {
      const Matrix kk = u.cov_fn(sk, l * quad.fine_step);
      for (int c = 0; c < p; ++c) {
        for (int c2 = 0; c2 < p; ++c2) {
          out.gram(c * m + k, c2 * m + l) = kk(c, c2);
          out.gram(c2 * m + l, c * m + k) = kk(c, c2);
        }
      }
    }
  }
  return out;
}

double PriorOperator::trapezoid_weight(int k, int upper) const {
  if (upper == 0) return 0.0;
  const double h = input_->step;
  return (k == 0 || k == upper) ? 0.5 * h : h;
}

PriorOperator::PriorOperator(const TimeGrid& grid, const LtiSystem& sys,
                             std::shared_ptr<const FineInput> input)
    : grid_(grid), input_(std::move(input)) {
  sys.validate_shapes();
  if (static_cast<int>(input_->index.size()) != grid.size()) {
    throw std::invalid_argument("PriorOperator: fine input was built for another grid");
  }
  a_ = sys.a;
  b_ = sys.b;
  c_ = sys.c;
  d_ = sys.d;
  m_x0_ = sys.m_x0;
  sigma_x0_ = sys.sigma_x0;

  const Eigen::Index n = sys.state_dim();
  const Eigen::Index m = sys.output_dim();
  const Eigen::Index p = sys.input_dim();
  const int big_m = input_->count;
  const int big_n = grid.size();
  if (p * big_m != input_->mean.size()) {
    throw std::invalid_argument("PriorOperator: input dimension mismatch");
  }

  powers_.resize(static_cast<std::size_t>(std::max(big_m, 1)));
  powers_[0] = Matrix::Identity(n, n);
  if (big_m > 1) powers_[1] = matrix_exp(a_, input_->step);
  for (int k = 2; k < big_m; ++k) powers_[k] = powers_[k - 1] * powers_[1];

  std::vector<Matrix> ceb(powers_.size());
  for (std::size_t k = 0; k < powers_.size(); ++k) ceb[k] = c_ * powers_[k] * b_;

  h0_ = Matrix::Zero(m * big_n, n);
  h_ = Matrix::Zero(m * big_n, p * big_m);
  for (int i = 0; i < big_n; ++i) {
    const int ki = input_->index[static_cast<std::size_t>(i)];
    const Matrix ce = c_ * powers_[static_cast<std::size_t>(ki)];
    for (Eigen::Index j = 0; j < m; ++j) h0_.row(j * big_n + i) = ce.row(j);
    for (int k = 0; k <= ki; ++k) {
      const double w = trapezoid_weight(k, ki);
      if (w == 0.0) continue;
      const Matrix& g = ceb[static_cast<std::size_t>(ki - k)];
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index c = 0; c < p; ++c) h_(j * big_n + i, c * big_m + k) += w * g(j, c);
      }
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index c = 0; c < p; ++c) h_(j * big_n + i, c * big_m + ki) += d_(j, c);
    }
  }

  h_gram_ = h_ * input_->gram;
  mean_ = h0_ * m_x0_ + h_ * input_->mean;
  cov_ = h0_ * sigma_x0_ * h0_.transpose() + h_gram_ * h_.transpose();
  cov_ = symmetrize(cov_);
}

GaussianOverGrid PriorOperator::gaussian() const {
  return GaussianOverGrid{mean_, cov_, grid_, static_cast<int>(c_.rows())};
}

Matrix PriorOperator::backward(const Vector& grad_mean, const Matrix& grad_cov) const {
  const Eigen::Index n = a_.rows();
  const Eigen::Index m = c_.rows();
  const Eigen::Index p = b_.cols();
  const int big_m = input_->count;
  const int big_n = grid_.size();

  const Matrix grad_h = grad_mean * input_->mean.transpose() + 2.0 * grad_cov * h_gram_;
  const Matrix grad_h0 =
      grad_mean * m_x0_.transpose() + 2.0 * grad_cov * (h0_ * sigma_x0_);

  std::vector<Matrix> grad_ceb(powers_.size(), Matrix::Zero(m, p));
  std::vector<Matrix> grad_pow(powers_.size(), Matrix::Zero(n, n));
  for (int i = 0; i < big_n; ++i) {
    const int ki = input_->index[static_cast<std::size_t>(i)];
    Matrix g0(m, n);
    for (Eigen::Index j = 0; j < m; ++j) g0.row(j) = grad_h0.row(j * big_n + i);
    grad_pow[static_cast<std::size_t>(ki)] += c_.transpose() * g0;
    for (int k = 0; k <= ki; ++k) {
      const double w = trapezoid_weight(k, ki);
      if (w == 0.0) continue;
      Matrix& acc = grad_ceb[static_cast<std::size_t>(ki - k)];
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index c = 0; c < p; ++c) acc(j, c) += w * grad_h(j * big_n + i, c * big_m + k);
      }
    }
  }
  for (std::size_t k = 0; k < powers_.size(); ++k) {
    grad_pow[k] += c_.transpose() * grad_ceb[k] * b_.transpose();
  }
  if (big_m < 2) return Matrix::Zero(n, n);
  // E_k = E_{k-1} E_1
  const Matrix& e1 = powers_[1];
  for (int k = big_m - 1; k >= 2; --k) {
    grad_pow[k - 1] += grad_pow[k] * e1.transpose();
    grad_pow[1] += powers_[k - 1].transpose() * grad_pow[k];
  }
  const double h = input_->step;
  return h * matrix_exp_frechet(h * a_.transpose(), grad_pow[1]);
}

GaussianOverGrid assemble_prior(const TimeGrid& grid, const LtiSystem& sys, const InputGp& u,
                                const QuadratureConfig& quad) {
  auto input = std::make_shared<const FineInput>(discretize_input(grid, u, quad));
  PriorOperator op(grid, sys, input);
  return op.gaussian();
}

GaussianOverGrid prior_over_grid(const TimeGrid& grid, const LtiSystem& sys, const InputGp& u,
                                 const QuadratureConfig& quad) {
  GaussianOverGrid g = assemble_prior(grid, sys, u, quad);
  (void)jittered_cholesky(g.cov);
  return g;
}

Vector prior_mean(double t, const LtiSystem& sys, const InputGp& u, const QuadratureConfig& quad) {
  if (t < 0.0) throw std::invalid_argument("prior_mean: t must be non-negative");
  return assemble_prior(TimeGrid({t}), sys, u, quad).mean;
}

Matrix prior_cov(double t, double t2, const LtiSystem& sys, const InputGp& u,
                 const QuadratureConfig& quad) {
  if (t < 0.0 || t2 < 0.0) throw std::invalid_argument("prior_cov: times must be non-negative");
  const Eigen::Index m = sys.output_dim();
  if (t == t2) return assemble_prior(TimeGrid({t}), sys, u, quad).cov;
  const bool ordered = t < t2;
  const GaussianOverGrid g =
      assemble_prior(TimeGrid(ordered ? std::vector{t, t2} : std::vector{t2, t}), sys, u, quad);
  const int it = ordered ? 0 : 1;
  const int it2 = ordered ? 1 : 0;
  Matrix out(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index l = 0; l < m; ++l) {
      out(j, l) = g.cov(g.index(static_cast<int>(j), it), g.index(static_cast<int>(l), it2));
    }
  }
  return out;
}

}  // namespace segp
