#ifndef SEGP_STABLE_LTI_HPP
#define SEGP_STABLE_LTI_HPP

#include <vector>

#include "segp/linalg.hpp"

namespace segp {

/// Unconstrained storage for a semi-contracting LTI system.
///
/// The state matrix is never stored. It is realized from three raw n x n
/// matrices:
///   V1 = strict lower part of v1_raw, diagonal |raw| + kDiagEpsilon
///   V2 = strict lower part of v2_raw, diagonal |raw|
///   V3 = (v3_raw - v3_raw^T) / 2
/// and A = P^{-1} (-1/2 V2 V2^T + V3) with metric P = V1 V1^T, so every raw
/// value maps to a system with P A + A^T P = -V2 V2^T <= 0.
struct StableLtiParams {
  static constexpr double kDiagEpsilon = 1e-6;

  Matrix v1_raw;
  Matrix v2_raw;
  Matrix v3_raw;
  Matrix b;
  Matrix c;
  Matrix d;

  Eigen::Index state_dim() const { return v1_raw.rows(); }

  Matrix v1() const;
  Matrix v2() const;
  Matrix v3() const;

  /// Raw values whose realization is exactly (V1, V2, V3). V1 must have
  /// diagonal >= kDiagEpsilon, V2 a non-negative diagonal, V3 skew.
  static StableLtiParams from_factors(const Matrix& v1, const Matrix& v2, const Matrix& v3,
                                      Matrix b, Matrix c, Matrix d);
};

struct StateMatrix {
  Matrix a;
  Matrix p;
  double p_condition = 1.0;
};

/// Realized LTI system with Gaussian initial state.
struct LtiSystem {
  Matrix a;
  Matrix b;
  Matrix c;
  Matrix d;
  Matrix p;
  Vector m_x0;
  Matrix sigma_x0;

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
  Eigen::Index output_dim() const { return c.rows(); }

  /// Throws std::invalid_argument on inconsistent shapes.
  void validate_shapes() const;
};

StateMatrix build_state_matrix(const Matrix& v1, const Matrix& v2, const Matrix& v3);
StateMatrix build_state_matrix(const StableLtiParams& params);

LtiSystem realize(const StableLtiParams& params, const Vector& m_x0, const Matrix& sigma_x0);

/// Gradient of a scalar loss with respect to the raw storage, given dLoss/dA.
struct StableLtiGradient {
  Matrix v1_raw;
  Matrix v2_raw;
  Matrix v3_raw;
};
StableLtiGradient build_state_matrix_backward(const StableLtiParams& params,
                                              const StateMatrix& realized,
                                              const Matrix& grad_a);

/// True iff the largest eigenvalue of sym(P A + A^T P) is <= tol.
/// Throws std::invalid_argument when P is asymmetric beyond 1e-12.
bool check_semi_contracting(const Matrix& a, const Matrix& p, double tol);

/// Largest eigenvalue of sym(P A + A^T P).
double contraction_margin(const Matrix& a, const Matrix& p);

struct UnconstrainedFactors {
  Matrix v2;
  Matrix v3;
};

/// Necessity direction: V2 = chol(-(PA + A^T P)), V3 = skew(PA + 1/2 V2 V2^T).
/// Throws std::domain_error when -(PA + A^T P) has an eigenvalue below -1e-8.
UnconstrainedFactors recover_unconstrained(const Matrix& a, const Matrix& p);

/// e^{A t} by scaling and squaring with a degree-13 Pade approximant.
Matrix matrix_exp(const Matrix& a, double t = 1.0);

/// Frechet derivative L(A, E) of the exponential at A in direction E,
/// read off the upper-right block of exp([[A, E], [0, A]]).
Matrix matrix_exp_frechet(const Matrix& a, const Matrix& e);

/// V(dx) = dx^T P dx along two trajectories driven by the same input.
/// Integrates with implicit Euler, x_{k+1} = (I - dt A)^{-1} (x_k + dt B u_{k+1}),
/// which is non-expansive in the P-norm whenever P A + A^T P <= 0.
/// `inputs` holds one column per step (steps + 1 columns, may have 0 rows
/// when B has no columns). Returns steps + 1 values.
std::vector<double> contraction_metric_trace(const Matrix& a, const Matrix& b, const Matrix& p,
                                             const Vector& x0_a, const Vector& x0_b,
                                             const Matrix& inputs, double dt, int steps);

}  // namespace segp

#endif  // SEGP_STABLE_LTI_HPP
