#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "segp/linalg.hpp"
#include "segp/rng.hpp"

namespace segp {
namespace {

Matrix random_spd(Eigen::Index n, Rng& rng) {
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  return g * g.transpose() + 0.5 * Matrix::Identity(n, n);
}

TEST(JitteredCholesky, FactorsSpdWithoutJitter) {
  Rng rng(1);
  const Matrix a = random_spd(6, rng);
  const CholeskyFactor f = jittered_cholesky(a);
  EXPECT_EQ(f.jitter, 0.0);
  EXPECT_LT((f.lower * f.lower.transpose() - a).norm(), 1e-12);
  EXPECT_NEAR(f.log_determinant(), std::log(a.determinant()), 1e-10);
  EXPECT_LT((f.inverse() * a - Matrix::Identity(6, 6)).norm(), 1e-10);
}

TEST(JitteredCholesky, EscalatesOnSingularMatrix) {
  const Matrix ones = Matrix::Ones(3, 3);
  const CholeskyFactor f = jittered_cholesky(ones);
  EXPECT_GE(f.jitter, 1e-8);
  EXPECT_LE(f.jitter, 1e-4);
  const Matrix jittered = ones + f.jitter * Matrix::Identity(3, 3);
  EXPECT_LT((f.lower * f.lower.transpose() - jittered).norm(), 1e-12);
}

TEST(JitteredCholesky, FailsOnIndefiniteMatrix) {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(jittered_cholesky(a), NumericalError);
}

TEST(JitteredCholesky, ZeroMatrixGivesZeroFactor) {
  const CholeskyFactor f = jittered_cholesky(Matrix::Zero(3, 3));
  EXPECT_TRUE(f.lower.isZero(0.0));
}

TEST(SemidefiniteCholesky, ReproducesRankDeficientMatrix) {
  Rng rng(2);
  Matrix g(4, 2);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const Matrix a = g * g.transpose();
  const Matrix l = semidefinite_cholesky(a);
  EXPECT_LT((l * l.transpose() - a).norm(), 1e-10);
}

TEST(Symmetrize, DoesNotAlias) {
  Matrix a(2, 2);
  a << 1.0, 2.0, 4.0, 3.0;
  a = symmetrize(a);
  EXPECT_DOUBLE_EQ(a(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(a(1, 0), 3.0);
}

TEST(Eigen, SpectralAbscissaOfRotation) {
  Matrix a(2, 2);
  a << -0.5, 1.0, -1.0, -0.5;
  EXPECT_NEAR(spectral_abscissa(a), -0.5, 1e-12);
}

TEST(L1, NormAndSign) {
  Matrix a(2, 2);
  a << -0.6, 0.0, 0.0, 0.0;
  EXPECT_DOUBLE_EQ(entrywise_l1(a), 0.6);
  const Matrix s = entrywise_sign(a);
  EXPECT_EQ(s(0, 0), -1.0);
  EXPECT_EQ(s(1, 1), 0.0);
}

TEST(CholeskyBackward, MatchesFiniteDifferences) {
  Rng rng(3);
  const Eigen::Index n = 4;
  const Matrix a = random_spd(n, rng);
  Matrix w(n, n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  // f(A) = <W, chol(A)> on the lower triangle.
  auto f = [&](const Matrix& x) {
    const Matrix l = Eigen::LLT<Matrix>(x).matrixL();
    return (w.triangularView<Eigen::Lower>().toDenseMatrix().cwiseProduct(l)).sum();
  };
  const Matrix l = Eigen::LLT<Matrix>(a).matrixL();
  const Matrix g = cholesky_backward(l, w.triangularView<Eigen::Lower>().toDenseMatrix());
  EXPECT_LT((g - g.transpose()).norm(), 1e-12);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      auto probe = [&](double v) {
        Matrix x = a;
        x(i, j) = v;
        x(j, i) = v;
        return f(x);
      };
      const double fd = testing::central_difference(probe, a(i, j), 1e-5);
      const double analytic = i == j ? g(i, i) : g(i, j) + g(j, i);
      EXPECT_NEAR(analytic, fd, 1e-7 * std::max(1.0, std::abs(fd))) << i << "," << j;
    }
  }
}

}  // namespace
}  // namespace segp
