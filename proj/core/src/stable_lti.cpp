#include "segp/stable_lti.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace segp {

namespace {

Matrix lower_with_diag(const Matrix& raw, double eps) {
  Matrix out = raw.triangularView<Eigen::StrictlyLower>();
  out.diagonal() = raw.diagonal().cwiseAbs().array() + eps;
  return out;
}

void require_square(const Matrix& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    std::ostringstream msg;
    msg << name << " must be " << n << "x" << n << ", got " << m.rows() << "x" << m.cols();
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

Matrix StableLtiParams::v1() const { return lower_with_diag(v1_raw, kDiagEpsilon); }
Matrix StableLtiParams::v2() const { return lower_with_diag(v2_raw, 0.0); }
Matrix StableLtiParams::v3() const { return 0.5 * (v3_raw - v3_raw.transpose()); }

StableLtiParams StableLtiParams::from_factors(const Matrix& v1, const Matrix& v2,
                                              const Matrix& v3, Matrix b, Matrix c, Matrix d) {
  const Eigen::Index n = v1.rows();
  require_square(v1, n, "V1");
  require_square(v2, n, "V2");
  require_square(v3, n, "V3");
  if ((v1.diagonal().array() < kDiagEpsilon).any()) {
    throw std::invalid_argument("V1 diagonal must be >= kDiagEpsilon");
  }
  if ((v2.diagonal().array() < 0.0).any()) {
    throw std::invalid_argument("V2 diagonal must be non-negative");
  }
  StableLtiParams out;
  out.v1_raw = v1.triangularView<Eigen::StrictlyLower>();
  out.v1_raw.diagonal() = v1.diagonal().array() - kDiagEpsilon;
  out.v2_raw = v2.triangularView<Eigen::Lower>();
  out.v3_raw = v3;  // (V3 - V3^T)/2 == V3 for skew V3
  out.b = std::move(b);
  out.c = std::move(c);
  out.d = std::move(d);
  return out;
}

void LtiSystem::validate_shapes() const {
  const Eigen::Index n = a.rows();
  require_square(a, n, "A");
  require_square(p, n, "P");
  require_square(sigma_x0, n, "Sigma_x0");
  if (b.rows() != n || c.cols() != n || d.rows() != c.rows() || d.cols() != b.cols() ||
      m_x0.size() != n) {
    throw std::invalid_argument("LtiSystem: inconsistent (A, B, C, D, m_x0) shapes");
  }
}

StateMatrix build_state_matrix(const Matrix& v1, const Matrix& v2, const Matrix& v3) {
  const Eigen::Index n = v1.rows();
  require_square(v1, n, "V1");
  require_square(v2, n, "V2");
  require_square(v3, n, "V3");
  StateMatrix out;
  out.p = v1 * v1.transpose();
  const Matrix m = -0.5 * v2 * v2.transpose() + v3;
  // A = V1^{-T} V1^{-1} M through two triangular solves.
  Matrix tmp = v1.triangularView<Eigen::Lower>().solve(m);
  out.a = v1.transpose().triangularView<Eigen::Upper>().solve(tmp);
  Eigen::JacobiSVD<Matrix> svd(v1);
  const auto& s = svd.singularValues();
  const double ratio = s(0) / s(s.size() - 1);
  out.p_condition = ratio * ratio;
  return out;
}

StateMatrix build_state_matrix(const StableLtiParams& params) {
  return build_state_matrix(params.v1(), params.v2(), params.v3());
}

LtiSystem realize(const StableLtiParams& params, const Vector& m_x0, const Matrix& sigma_x0) {
  StateMatrix sm = build_state_matrix(params);
  LtiSystem sys{std::move(sm.a), params.b, params.c, params.d, std::move(sm.p), m_x0, sigma_x0};
  sys.validate_shapes();
  return sys;
}

StableLtiGradient build_state_matrix_backward(const StableLtiParams& params,
                                              const StateMatrix& realized,
                                              const Matrix& grad_a) {
  const Matrix v1 = params.v1();
  const Matrix v2 = params.v2();
  // M_bar = P^{-1} A_bar, P_bar = -M_bar A^T
  Matrix tmp = v1.triangularView<Eigen::Lower>().solve(grad_a);
  const Matrix grad_m = v1.transpose().triangularView<Eigen::Upper>().solve(tmp);
  const Matrix grad_p = -grad_m * realized.a.transpose();

  const Matrix grad_v1 = (grad_p + grad_p.transpose()) * v1;
  const Matrix grad_v2 = -0.5 * (grad_m + grad_m.transpose()) * v2;
  const Matrix& grad_v3 = grad_m;

  StableLtiGradient out;
  out.v1_raw = grad_v1.triangularView<Eigen::StrictlyLower>();
  out.v1_raw.diagonal() =
      grad_v1.diagonal().cwiseProduct(entrywise_sign(Matrix(params.v1_raw.diagonal())));
  out.v2_raw = grad_v2.triangularView<Eigen::StrictlyLower>();
  out.v2_raw.diagonal() =
      grad_v2.diagonal().cwiseProduct(entrywise_sign(Matrix(params.v2_raw.diagonal())));
  out.v3_raw = 0.5 * (grad_v3 - grad_v3.transpose());
  return out;
}

double contraction_margin(const Matrix& a, const Matrix& p) {
  return max_symmetric_eigenvalue(p * a + a.transpose() * p);
}

bool check_semi_contracting(const Matrix& a, const Matrix& p, double tol) {
  require_square(a, a.rows(), "A");
  require_square(p, a.rows(), "P");
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("check_semi_contracting: P is not symmetric");
  }
  return contraction_margin(a, p) <= tol;
}

UnconstrainedFactors recover_unconstrained(const Matrix& a, const Matrix& p) {
  require_square(a, a.rows(), "A");
  require_square(p, a.rows(), "P");
  const Matrix pa = p * a;
  const Matrix q = symmetrize(-(pa + pa.transpose()));
  const double min_eig = min_symmetric_eigenvalue(q);
  if (min_eig < -1e-8) {
    std::ostringstream msg;
    msg << "recover_unconstrained: -(PA + A^T P) is not PSD (min eigenvalue " << min_eig << ")";
    throw std::domain_error(msg.str());
  }
  UnconstrainedFactors out;
  out.v2 = semidefinite_cholesky(q);
  const Matrix s = pa + 0.5 * out.v2 * out.v2.transpose();
  out.v3 = 0.5 * (s - s.transpose());
  return out;
}

Matrix matrix_exp(const Matrix& a, double t) {
  require_square(a, a.rows(), "A");
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);
  static constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
      129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
      1323241920.0,        40840800.0,          960960.0,           16380.0,
      182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  Matrix x = a * t;
  const double norm1 = x.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    x /= std::ldexp(1.0, squarings);
  }
  const Matrix ident = Matrix::Identity(n, n);
  const Matrix x2 = x * x;
  const Matrix x4 = x2 * x2;
  const Matrix x6 = x4 * x2;
  const Matrix u_inner = x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 +
                         b[3] * x2 + b[1] * ident;
  const Matrix u = x * u_inner;
  const Matrix v = x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 +
                   b[2] * x2 + b[0] * ident;
  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

Matrix matrix_exp_frechet(const Matrix& a, const Matrix& e) {
  const Eigen::Index n = a.rows();
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a;
  block.bottomRightCorner(n, n) = a;
  block.topRightCorner(n, n) = e;
  return matrix_exp(block).topRightCorner(n, n);
}

std::vector<double> contraction_metric_trace(const Matrix& a, const Matrix& b, const Matrix& p,
                                             const Vector& x0_a, const Vector& x0_b,
                                             const Matrix& inputs, double dt, int steps) {
  const Eigen::Index n = a.rows();
  if (steps < 0 || dt <= 0.0) {
    throw std::invalid_argument("contraction_metric_trace: need steps >= 0 and dt > 0");
  }
  if (b.cols() > 0 && inputs.cols() < steps + 1) {
    throw std::invalid_argument("contraction_metric_trace: inputs must have steps + 1 columns");
  }
  const Eigen::PartialPivLU<Matrix> step_lu(Matrix::Identity(n, n) - dt * a);
  Vector xa = x0_a;
  Vector xb = x0_b;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  auto metric = [&] {
    const Vector delta = xa - xb;
    return delta.dot(p * delta);
  };
  out.push_back(metric());
  for (int k = 0; k < steps; ++k) {
    Vector drive = Vector::Zero(n);
    if (b.cols() > 0) drive = dt * (b * inputs.col(k + 1));
    const Vector rhs_a = xa + drive;
    const Vector rhs_b = xb + drive;
    xa = step_lu.solve(rhs_a);
    xb = step_lu.solve(rhs_b);
    out.push_back(metric());
  }
  return out;
}

}  // namespace segp
