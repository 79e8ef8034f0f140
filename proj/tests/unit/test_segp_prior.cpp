#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "segp/segp_prior.hpp"
#include "segp/simulator.hpp"
#include "segp/stable_lti.hpp"

namespace segp {
namespace {

LtiSystem case_study_system() { return DatasetConfig{}.system(); }
InputGp case_study_input() { return DatasetConfig{}.input(); }

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
  return m;
}

/// Random semi-contracting system with n states, m outputs and p inputs.
LtiSystem random_system(Eigen::Index n, Eigen::Index m, Eigen::Index p, Rng& rng) {
  StableLtiParams raw;
  raw.v1_raw = Matrix::Identity(n, n) + normal_matrix(n, n, rng, 0.2);
  raw.v2_raw = normal_matrix(n, n, rng, 0.6);
  raw.v3_raw = normal_matrix(n, n, rng, 0.8);
  raw.b = normal_matrix(n, p, rng);
  raw.c = normal_matrix(m, n, rng);
  raw.d = normal_matrix(m, p, rng, 0.3);
  const Matrix g = normal_matrix(n, n, rng, 0.3);
  return realize(raw, normal_matrix(n, 1, rng), g * g.transpose() + 0.05 * Matrix::Identity(n, n));
}

InputGp random_input(Eigen::Index p, Rng& rng) {
  Vector slopes(p), offsets(p), variances(p), lengthscales(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    slopes(c) = rng.normal();
    offsets(c) = rng.normal();
    variances(c) = 0.3 + rng.uniform();
    lengthscales(c) = 0.3 + rng.uniform();
  }
  return InputGp::independent_se(slopes, offsets, variances, lengthscales);
}

TEST(TimeGrid, RejectsUnorderedOrNegative) {
  EXPECT_THROW(TimeGrid({0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(TimeGrid({-0.1, 0.2}), std::invalid_argument);
  EXPECT_EQ(TimeGrid::uniform(25, 0.12).size(), 25);
}

TEST(SeInputKernel, Examples) {
  EXPECT_DOUBLE_EQ(se_input_kernel(0.7, 0.7, 1.0, 1.0), 1.0);
  EXPECT_NEAR(se_input_kernel(0.0, 1.0, 1.0, 1.0), 0.6065307, 1e-7);
  EXPECT_LT(se_input_kernel(0.0, 1e3, 1.0, 1.0), 1e-300);
  EXPECT_THROW(se_input_kernel(0.0, 1.0, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(se_input_kernel(0.0, 1.0, 1.0, -1.0), std::invalid_argument);
}

TEST(GreensFunction, Examples) {
  const LtiSystem sys = case_study_system();
  EXPECT_TRUE(greens_c(1.0, 1.0, sys).isApprox(sys.c * sys.b));
  const Matrix g = greens_c(2.5, 0.3, sys);
  EXPECT_NEAR(g(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(g(1, 0), 1.0, 1e-15);
  LtiSystem zero_c = sys;
  zero_c.c.setZero();
  EXPECT_TRUE(greens_c(1.0, 0.0, zero_c).isZero(0.0));
  EXPECT_THROW(greens_c(0.0, 1.0, sys), std::invalid_argument);
}

TEST(PriorMean, ZeroInputsAndInitialMeanGiveZero) {
  LtiSystem sys = case_study_system();
  sys.m_x0.setZero();
  const InputGp u = InputGp::linear_mean_se(0.0, 1.0, 1.0);
  EXPECT_TRUE(prior_mean(1.2, sys, u, QuadratureConfig{}).isZero(1e-15));
}

TEST(PriorMean, CaseStudyClosedForms) {
  const LtiSystem sys = case_study_system();
  const InputGp u = case_study_input();
  const Vector m3 = prior_mean(3.0, sys, u, QuadratureConfig{});
  EXPECT_NEAR(m3(0), 0.247948, 1e-6);
  EXPECT_NEAR(m3(1), 5.654867, 1e-6);
  const Vector m0 = prior_mean(0.0, sys, u, QuadratureConfig{});
  EXPECT_DOUBLE_EQ(m0(0), 1.5);
  EXPECT_DOUBLE_EQ(m0(1), 0.0);
  for (double t : {0.0, 1.5, 3.0}) {
    const Vector m = prior_mean(t, sys, u, QuadratureConfig{});
    EXPECT_NEAR(m(0), 1.5 * std::exp(-0.6 * t), 1e-3 * 1.5 * std::exp(-0.6 * t));
    EXPECT_NEAR(m(1), 0.2 * std::numbers::pi * t * t, 1e-3 * std::max(1e-12, 0.2 * std::numbers::pi * t * t));
  }
}

TEST(PriorMean, QuadratureIsSecondOrder) {
  // x' = -a x + u with mean input s: m(t) = t / a - (1 - e^{-a t}) / a^2.
  const double a = 0.6;
  LtiSystem sys{Matrix::Constant(1, 1, -a), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                Matrix::Zero(1, 1), Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Zero(1, 1)};
  const InputGp u = InputGp::linear_mean_se(1.0, 1.0, 1.0);
  const double t = 3.0;
  const double exact = t / a - (1.0 - std::exp(-a * t)) / (a * a);
  const double coarse = std::abs(prior_mean(t, sys, u, QuadratureConfig{2e-2})(0) - exact);
  const double fine = std::abs(prior_mean(t, sys, u, QuadratureConfig{1e-2})(0) - exact);
  EXPECT_GT(coarse, 0.0);
  EXPECT_GE(coarse / fine, 3.0);
}

TEST(PriorCov, InitialBlock) {
  const Matrix k = prior_cov(0.0, 0.0, case_study_system(), case_study_input(), QuadratureConfig{});
  EXPECT_NEAR(k(0, 0), 0.04, 1e-15);
  EXPECT_NEAR(k(1, 1), 0.04, 1e-15);
  EXPECT_NEAR(k(0, 1), 0.0, 1e-15);
}

TEST(PriorCov, FeedThroughOnly) {
  Rng rng(3);
  LtiSystem sys = random_system(2, 2, 1, rng);
  sys.b.setZero();
  sys.sigma_x0.setZero();
  const InputGp u = InputGp::linear_mean_se(0.5, 1.3, 0.7);
  const Matrix k = prior_cov(0.4, 1.1, sys, u, QuadratureConfig{});
  const Matrix expect = sys.d * u.cov_fn(0.4, 1.1) * sys.d.transpose();
  EXPECT_LT((k - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PriorCov, SymmetricInItsArguments) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const LtiSystem sys = random_system(2, 2, 1, rng);
    const InputGp u = random_input(1, rng);
    const double t = 0.01 * static_cast<double>(rng.below(150));
    const double t2 = 0.01 * static_cast<double>(rng.below(150));
    const Matrix k = prior_cov(t, t2, sys, u, QuadratureConfig{});
    const Matrix kt = prior_cov(t2, t, sys, u, QuadratureConfig{});
    ASSERT_LT((k - kt.transpose()).cwiseAbs().maxCoeff(), 1e-9) << "trial " << trial;
  }
}

TEST(PriorOverGrid, SinglePointAtZero) {
  const GaussianOverGrid g = prior_over_grid(TimeGrid({0.0}), case_study_system(),
                                             case_study_input(), QuadratureConfig{});
  EXPECT_EQ(g.dim, 2);
  EXPECT_DOUBLE_EQ(g.mean(0), 1.5);
  EXPECT_DOUBLE_EQ(g.mean(1), 0.0);
  EXPECT_NEAR(g.cov(0, 0), 0.04, 1e-15);
  EXPECT_NEAR(g.cov(1, 1), 0.04, 1e-15);
}

TEST(PriorOverGrid, ZeroOutputMapGivesZeroGaussian) {
  LtiSystem sys = case_study_system();
  sys.c.setZero();
  sys.d.setZero();
  const GaussianOverGrid g =
      assemble_prior(TimeGrid::uniform(5, 0.12), sys, case_study_input(), QuadratureConfig{});
  EXPECT_TRUE(g.mean.isZero(0.0));
  EXPECT_TRUE(g.cov.isZero(0.0));
}

TEST(PriorOverGrid, CaseStudyBlockStructure) {
  const TimeGrid grid = DatasetConfig{}.grid();
  const GaussianOverGrid g =
      prior_over_grid(grid, case_study_system(), case_study_input(), QuadratureConfig{});
  const int n = grid.size();
  for (int i = 0; i < n; ++i) {
    for (int q = 0; q < n; ++q) {
      const double radius = 0.04 * std::exp(-0.6 * (grid[i] + grid[q]));
      EXPECT_NEAR(g.cov(g.index(0, i), g.index(0, q)), radius, 1e-12);
      EXPECT_NEAR(g.cov(g.index(0, i), g.index(1, q)), 0.0, 1e-12);
    }
  }
  for (int i = 1; i < n; ++i) {
    EXPECT_GT(g.cov(g.index(1, i), g.index(1, i)), g.cov(g.index(1, i - 1), g.index(1, i - 1)));
  }
}

TEST(PriorOverGrid, PositiveSemidefiniteBeforeJitter) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const LtiSystem sys = random_system(3, 2, 2, rng);
    const GaussianOverGrid g =
        assemble_prior(TimeGrid::uniform(8, 0.1), sys, random_input(2, rng), QuadratureConfig{});
    EXPECT_LT((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(min_symmetric_eigenvalue(g.cov), -1e-8 * g.cov.trace()) << "trial " << trial;
  }
}

TEST(PriorOverGrid, MeanStaysBoundedWithoutInput) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    LtiSystem sys = random_system(2, 2, 1, rng);
    sys.c = Matrix::Identity(2, 2);
    sys.d = Matrix::Zero(2, 1);
    const InputGp u = InputGp::linear_mean_se(0.0, 1.0, 1.0);
    const TimeGrid grid = TimeGrid::uniform(11, 10.0);
    const GaussianOverGrid g = assemble_prior(grid, sys, u, QuadratureConfig{1.0});
    double previous = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid.size(); ++i) {
      Vector x(2);
      x << g.mean(g.index(0, i)), g.mean(g.index(1, i));
      const double v = x.dot(sys.p * x);
      EXPECT_LE(v, previous * (1.0 + 1e-9));
      previous = v;
    }
  }
}

TEST(PriorOperator, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  const LtiSystem base = random_system(2, 2, 1, rng);
  const TimeGrid grid = TimeGrid::uniform(4, 0.1);
  const InputGp u = random_input(1, rng);
  const auto input = std::make_shared<const FineInput>(discretize_input(grid, u, QuadratureConfig{}));
  const Eigen::Index mn = 8;
  const Vector gm = normal_matrix(mn, 1, rng);
  Matrix gc = normal_matrix(mn, mn, rng);
  gc = symmetrize(gc);
  auto loss = [&](const Matrix& a) {
    LtiSystem s = base;
    s.a = a;
    const PriorOperator op(grid, s, input);
    return gm.dot(op.mean()) + gc.cwiseProduct(op.cov()).sum();
  };
  const PriorOperator op(grid, base, input);
  const Matrix ga = op.backward(gm, gc);
  for (Eigen::Index k = 0; k < 4; ++k) {
    auto probe = [&](double v) {
      Matrix a = base.a;
      a.data()[k] = v;
      return loss(a);
    };
    const double fd = testing::central_difference(probe, base.a.data()[k], 1e-5);
    EXPECT_NEAR(ga.data()[k], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "entry " << k;
  }
}

/// Analytic prior against the empirical moments of simulated trajectories.
void expect_matches_monte_carlo(const LtiSystem& sys, const InputGp& u, const TimeGrid& grid,
                                int count, std::uint64_t seed) {
  const QuadratureConfig quad{1e-2};
  const GaussianOverGrid g = assemble_prior(grid, sys, u, quad);
  const Matrix draws = testing::simulate_outputs(sys, u, grid, quad.fine_step, 10, 0.0, count, seed);
  const testing::SampleMoments s = testing::sample_moments(draws);
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) {
    EXPECT_LE(std::abs(s.mean(i) - g.mean(i)), 3.0 * s.mean_se(i)) << "mean " << i;
    for (Eigen::Index j = 0; j <= i; ++j) {
      EXPECT_LE(std::abs(s.cov(i, j) - g.cov(i, j)), 3.0 * s.cov_se(i, j))
          << "cov " << i << "," << j;
    }
  }
}

TEST(PriorMonteCarlo, RandomSystemsMatchEmpiricalMoments) {
  Rng rng(13);
  const std::array<std::array<Eigen::Index, 3>, 3> shapes{{{2, 2, 1}, {3, 2, 2}, {1, 1, 1}}};
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto [n, m, p] = shapes[k];
    const LtiSystem sys = random_system(n, m, p, rng);
    expect_matches_monte_carlo(sys, random_input(p, rng), TimeGrid::uniform(4, 0.2), 100000,
                               100 + k);
  }
}

}  // namespace
}  // namespace segp
