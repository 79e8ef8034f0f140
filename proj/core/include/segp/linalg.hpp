#ifndef SEGP_LINALG_HPP
#define SEGP_LINALG_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace segp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a factorization fails even after the full jitter ladder.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower Cholesky factor together with the diagonal jitter that was needed
/// to obtain it.
struct CholeskyFactor {
  Matrix lower;
  double jitter = 0.0;

  Eigen::Index size() const { return lower.rows(); }

  /// Solves (A + jitter I) x = b.
  Matrix solve(const Matrix& b) const;
  Vector solve(const Vector& b) const;
  /// log det(A + jitter I)
  double log_determinant() const;
  /// (A + jitter I)^{-1}
  Matrix inverse() const;
};

/// Jitter ladder shared by the prior and the conditioning code: try the plain
/// factorization, then add 1e-8 * mean(diag) and escalate by 10x up to
/// 1e-4 * mean(diag). An all-zero matrix factors to a zero factor.
CholeskyFactor jittered_cholesky(const Matrix& a);

/// Cholesky factor of a symmetric PSD (possibly singular) matrix. Pivots whose
/// remaining value is below `tol` * max(diag) become zero columns.
Matrix semidefinite_cholesky(const Matrix& a, double tol = 1e-12);

Matrix symmetrize(const Matrix& a);

double max_symmetric_eigenvalue(const Matrix& a);
double min_symmetric_eigenvalue(const Matrix& a);

/// Largest real part over the eigenvalues of a general square matrix.
double spectral_abscissa(const Matrix& a);

/// Reverse-mode rule for A = L L^T. Given dLoss/dL (only its lower triangle is
/// read) returns the symmetric dLoss/dA.
Matrix cholesky_backward(const Matrix& lower, const Matrix& grad_lower);

/// Sum of absolute entries.
double entrywise_l1(const Matrix& a);

/// Sign of each entry with sign(0) = 0.
Matrix entrywise_sign(const Matrix& a);

}  // namespace segp

#endif  // SEGP_LINALG_HPP
