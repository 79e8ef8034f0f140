#include "segp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace segp {

namespace {

constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-4;

bool try_factor(const Matrix& a, double jitter, Matrix& lower) {
  Matrix shifted = a;
  shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  return lower.allFinite() && (lower.diagonal().array() > 0.0).all();
}

}  // namespace

Matrix CholeskyFactor::solve(const Matrix& b) const {
  Matrix x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Vector CholeskyFactor::solve(const Vector& b) const {
  Vector x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

double CholeskyFactor::log_determinant() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

Matrix CholeskyFactor::inverse() const {
  return solve(Matrix(Matrix::Identity(size(), size())));
}

CholeskyFactor jittered_cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("jittered_cholesky: matrix is not square");
  }
  CholeskyFactor out;
  if (a.size() == 0) return out;
  if (!a.allFinite()) {
    throw NumericalError("jittered_cholesky: non-finite entries");
  }
  if (a.isZero(0.0)) {
    out.lower = Matrix::Zero(a.rows(), a.cols());
    return out;
  }
  if (try_factor(a, 0.0, out.lower)) return out;

  double scale = a.diagonal().mean();
  if (!(scale > 0.0)) scale = 1.0;
  for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-12); rel *= 10.0) {
    if (try_factor(a, rel * scale, out.lower)) {
      out.jitter = rel * scale;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "Cholesky failed after jitter escalation to " << kJitterMax
      << " * mean(diag) on a " << a.rows() << "x" << a.cols() << " matrix";
  throw NumericalError(msg.str());
}

Matrix semidefinite_cholesky(const Matrix& a, double tol) {
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const double cutoff = tol * scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (d <= cutoff) continue;  // zero column
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  return l;
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

double max_symmetric_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double min_symmetric_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_abscissa(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

Matrix cholesky_backward(const Matrix& lower, const Matrix& grad_lower) {
  // phi(L^T Lbar): lower triangle with the diagonal halved
  Matrix phi = (lower.transpose() * grad_lower.triangularView<Eigen::Lower>().toDenseMatrix())
                   .triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  // L^{-T} phi L^{-1}
  Matrix tmp = lower.transpose().triangularView<Eigen::Upper>().solve(phi);
  Matrix grad = lower.transpose()
                    .triangularView<Eigen::Upper>()
                    .solve(tmp.transpose())
                    .transpose();
  return symmetrize(grad);
}

double entrywise_l1(const Matrix& a) { return a.cwiseAbs().sum(); }

Matrix entrywise_sign(const Matrix& a) {
  return a.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

}  // namespace segp
