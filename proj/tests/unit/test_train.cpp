#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "segp/csv.hpp"
#include "segp/stable_lti.hpp"
#include "segp/train.hpp"

namespace segp {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainState toy_state(double a, double b) {
  TrainState st;
  st.params.v1_raw = (Matrix(1, 2) << a, b).finished();
  st.first_moment = st.params.zeros_like();
  st.second_moment = st.params.zeros_like();
  return st;
}

TEST(AdamW, MatchesHandComputedSteps) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  TrainState st = toy_state(0.5, -1.0);
  ModelParams g = st.params.zeros_like();
  const double g1[2] = {0.2, -0.4};
  const double g2[2] = {-0.1, 0.3};

  double p[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int step = 1; step <= 2; ++step) {
    const double* gs = step == 1 ? g1 : g2;
    g.v1_raw << gs[0], gs[1];
    adamw_step(st, g, cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * gs[i];
      v[i] = 0.999 * v[i] + 0.001 * gs[i] * gs[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, step));
      const double vh = v[i] / (1.0 - std::pow(0.999, step));
      p[i] -= 0.1 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * p[i]);
    }
    EXPECT_NEAR(st.params.v1_raw(0, 0), p[0], 1e-12);
    EXPECT_NEAR(st.params.v1_raw(0, 1), p[1], 1e-12);
  }
  EXPECT_EQ(st.step, 2);
}

TEST(AdamW, FirstStepMovesByLearningRateAgainstGradientSign) {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  TrainState st = toy_state(0.0, 0.0);
  ModelParams g = st.params.zeros_like();
  g.v1_raw << 3.0, -1e-3;
  adamw_step(st, g, cfg);
  EXPECT_NEAR(st.params.v1_raw(0, 0), -cfg.learning_rate, 1e-9);
  EXPECT_NEAR(st.params.v1_raw(0, 1), cfg.learning_rate, 1e-6);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  TrainState st = toy_state(2.0, -4.0);
  adamw_step(st, st.params.zeros_like(), cfg);
  EXPECT_NEAR(st.params.v1_raw(0, 0), 2.0 * (1.0 - cfg.learning_rate * 0.1), 1e-15);
  EXPECT_NEAR(st.params.v1_raw(0, 1), -4.0 * (1.0 - cfg.learning_rate * 0.1), 1e-15);
}

TEST(AdamW, RejectsNonFiniteGradient) {
  TrainState st = toy_state(0.0, 0.0);
  ModelParams g = st.params.zeros_like();
  g.v1_raw(0, 1) = std::nan("");
  EXPECT_THROW(adamw_step(st, g, TrainConfig{}), NumericalError);
}

TEST(Init, NearZeroDynamicsAndSemiContracting) {
  const TrainState st = init_params(ModelShape{}, TrainConfig{}, 5);
  StableLtiParams lti;
  lti.v1_raw = st.params.v1_raw;
  lti.v2_raw = st.params.v2_raw;
  lti.v3_raw = st.params.v3_raw;
  const StateMatrix s = build_state_matrix(lti);
  EXPECT_LE(s.a.norm(), 1e-5);
  EXPECT_TRUE(check_semi_contracting(s.a, s.p, 1e-8));
  EXPECT_LT((s.p - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE((st.params.enc.head_scale.array() == 1.0).all());
  EXPECT_TRUE(st.params.dec.b2.isZero(0.0));
}

TEST(Init, KaimingScale) {
  ModelShape shape;
  shape.canvas = 10;  // encoder fan-in 100
  shape.encoder_hidden = 500;
  const TrainState st = init_params(shape, TrainConfig{}, 6);
  const Matrix& w = st.params.enc.w1;
  ASSERT_EQ(w.cols(), 100);
  const double n = static_cast<double>(w.size());
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / (n - 1.0));
  EXPECT_NEAR(sd, std::sqrt(2.0 / 100.0), 3.0 * 0.1414 / std::sqrt(2.0 * n));
}

TEST(Init, DeterministicPerSeed) {
  const TrainState a = init_params(ModelShape{}, TrainConfig{}, 9);
  const TrainState b = init_params(ModelShape{}, TrainConfig{}, 9);
  const TrainState c = init_params(ModelShape{}, TrainConfig{}, 10);
  auto ta = a.params.tensors();
  auto tb = b.params.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(*ta[i].second, *tb[i].second);
  EXPECT_TRUE(a.rng == b.rng);
  EXPECT_NE(a.params.enc.w1, c.params.enc.w1);
}

TEST(TrainConfig, LambdaScheduleIsLinear) {
  TrainConfig cfg;
  cfg.epochs = 40;
  EXPECT_DOUBLE_EQ(cfg.lambda_at(0), 0.025);
  EXPECT_DOUBLE_EQ(cfg.lambda_at(1), 0.025);
  EXPECT_NEAR(cfg.lambda_at(40), 0.3, 1e-15);
  EXPECT_NEAR(cfg.lambda_at(20) - cfg.lambda_at(19), 0.275 / 39.0, 1e-15);
  cfg.epochs = 1;
  EXPECT_DOUBLE_EQ(cfg.lambda_at(1), 0.025);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.train_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Split, CoversAllVideosOnce) {
  const SplitIndices s = split_dataset(2000, 0.9);
  EXPECT_EQ(s.train.size(), 1800u);
  EXPECT_EQ(s.test.size(), 200u);
  EXPECT_EQ(s.train.back() + 1, s.test.front());
  EXPECT_THROW(split_dataset(1, 0.5), std::invalid_argument);
  EXPECT_EQ(split_dataset(2, 0.99).test.size(), 1u);
}

struct TinySetup {
  Dataset data;
  ModelShape shape;
  TrainConfig cfg;
};

TinySetup tiny() {
  TinySetup t;
  DatasetConfig dc;
  dc.canvas = 12;
  dc.frames = 6;
  dc.ball_radius = 1;
  dc.count = 16;
  t.data = simulate_dataset(dc, 3);
  t.shape.canvas = 12;
  t.shape.feature_grid = 4;
  t.shape.encoder_hidden = 16;
  t.shape.decoder_hidden = 16;
  t.cfg.epochs = 2;
  t.cfg.batch_size = 4;
  t.cfg.train_fraction = 0.75;
  t.cfg.seed = 11;
  return t;
}

TEST(Train, ZeroEpochsLogsInitOnly) {
  TinySetup t = tiny();
  t.cfg.epochs = 0;
  t.cfg.gradient_check = false;
  const auto dir = std::filesystem::temp_directory_path() / "segp_test_train_zero";
  std::filesystem::remove_all(dir);
  const TrainResult r = train(t.data, t.shape, QuadratureConfig{}, t.cfg, TrainOptions{dir, "{}", {}});
  ASSERT_EQ(r.metrics.size(), 2u);
  EXPECT_EQ(r.metrics[0].split, "train");
  EXPECT_EQ(r.metrics[1].split, "test");
  const CsvTable table = read_csv(dir / "metrics.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"epoch", "split", "recon_per_pixel",
                                                    "kl_unweighted", "l1_A", "loss"}));
  EXPECT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(r.state.step, 0);
  std::filesystem::remove_all(dir);
}

TEST(Train, DeterministicAndContractingThroughout) {
  const TinySetup t = tiny();
  const auto base = std::filesystem::temp_directory_path() / "segp_test_train_det";
  std::filesystem::remove_all(base);
  TrainResult runs[2];
  for (int k = 0; k < 2; ++k) {
    runs[k] = train(t.data, t.shape, QuadratureConfig{}, t.cfg,
                    TrainOptions{base / std::to_string(k), "{}", {}});
  }
  for (const char* f : {"metrics.csv", "a_history.csv", "checkpoint.bin"}) {
    EXPECT_EQ(slurp(base / "0" / f), slurp(base / "1" / f)) << f;
  }
  ASSERT_EQ(runs[0].contraction_margins.size(), 3u);
  for (double m : runs[0].contraction_margins) EXPECT_LE(m, 1e-8);
  EXPECT_EQ(runs[0].metrics.size(), 6u);
  EXPECT_EQ(runs[0].state.step, 2 * 3);  // 12 training videos, batches of 4
  EXPECT_EQ(runs[0].state.epoch, 2);
  std::filesystem::remove_all(base);
}

TEST(Train, RejectsShapeMismatch) {
  TinySetup t = tiny();
  t.shape.canvas = 10;
  EXPECT_THROW(train(t.data, t.shape, QuadratureConfig{}, t.cfg, TrainOptions{}),
               std::invalid_argument);
}

TEST(Evaluate, IdenticalMatrixGivesZeroSpectralError) {
  const TinySetup t = tiny();
  TrainConfig cfg;
  const TrainState st = init_params(t.shape, cfg, 2);
  const ModelContext ctx =
      ModelContext::from_dataset(t.data.config, QuadratureConfig{}, Vector::Ones(2));
  const SegpPrior prior = build_prior(st.params, ctx);
  const EvalReport r = evaluate(st.params, ctx, t.data, {12, 13}, prior.state.a);
  EXPECT_EQ(r.a_spectral_error, 0.0);
  EXPECT_EQ(r.posterior_abs_error.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_LE(r.posterior_variance[i], r.prior_variance[i] + 1e-12);
    EXPECT_GE(r.posterior_abs_error[i], 0.0);
  }
  EXPECT_GT(r.recon_per_pixel, 0.0);
}

}  // namespace
}  // namespace segp
