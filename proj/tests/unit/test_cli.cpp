#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "commands.hpp"
#include "segp/csv.hpp"
#include "segp/dataset_io.hpp"

namespace segp::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AppConfig tiny_config() {
  AppConfig c;
  c.dataset.canvas = 12;
  c.dataset.frames = 6;
  c.dataset.ball_radius = 1;
  c.dataset.count = 16;
  c.dataset.seed = 5;
  c.model.feature_grid = 4;
  c.model.encoder_hidden = 16;
  c.model.decoder_hidden = 16;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.train.train_fraction = 0.75;
  c.train.gradient_check = false;
  c.baseline.steps = 20;
  return c;
}

/// One tiny dataset and checkpoint shared by the tests below.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "segp_test_cli";
    fs::remove_all(root_);
    cmd_datagen({Common{tiny_config(), root_ / "data", 0}});
    cmd_train({Common{tiny_config(), root_ / "run", 0}, root_ / "data"});
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path root_;
};

fs::path CliPipeline::root_;

TEST(Kernel, MeanMatchesClosedFormAndCrossBlockVanishes) {
  const fs::path out = fs::temp_directory_path() / "segp_test_cli_kernel";
  fs::remove_all(out);
  cmd_kernel({Common{AppConfig{}, out, 0}, std::nullopt});
  const CsvTable mean = read_csv(out / "kernel_mean.csv");
  ASSERT_EQ(mean.header, (std::vector<std::string>{"time", "y0", "y1"}));
  const auto t = mean.numeric_column("time");
  const auto r = mean.numeric_column("y0");
  const auto th = mean.numeric_column("y1");
  ASSERT_EQ(t.size(), 25u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(r[i], 1.5 * std::exp(-0.6 * t[i]), 1e-3 * 1.5 * std::exp(-0.6 * t[i]));
    const double want = 0.2 * std::numbers::pi * t[i] * t[i];
    EXPECT_NEAR(th[i], want, 1e-3 * want + 1e-12);
  }
  const Matrix cov = read_matrix_csv(out / "kernel_cov.csv");
  ASSERT_EQ(cov.rows(), 50);
  EXPECT_NEAR(cov(0, 0), 0.04, 1e-12);
  EXPECT_TRUE(cov.block(0, 25, 25, 25).isZero(0.0));
  EXPECT_LT((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  fs::remove_all(out);
}

TEST(Datagen, CreatesNestedDirectoryAndIsReproducible) {
  const fs::path base = fs::temp_directory_path() / "segp_test_cli_datagen";
  fs::remove_all(base);
  AppConfig c = tiny_config();
  c.dataset.count = 3;
  cmd_datagen({Common{c, base / "a" / "b", 0}});
  cmd_datagen({Common{c, base / "c", 0}});
  for (const char* f : {"manifest.json", "latents.bin", "inputs.bin", "frames.bin"}) {
    EXPECT_EQ(slurp(base / "a" / "b" / f), slurp(base / "c" / f)) << f;
  }
  EXPECT_EQ(load_dataset(base / "c").count, 3);
  fs::remove_all(base);
}

TEST_F(CliPipeline, TrainWritesArtifacts) {
  for (const char* f : {"metrics.csv", "a_history.csv", "checkpoint.bin", "config.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  }
  EXPECT_EQ(read_csv(root_ / "run" / "metrics.csv").rows.size(), 4u);
}

TEST_F(CliPipeline, EvalSummariesAgree) {
  const EvalReport r =
      cmd_eval({Common{tiny_config(), root_ / "eval", 0}, root_ / "data", root_ / "run" / "checkpoint.bin"});
  const CsvTable per_time = read_csv(root_ / "eval" / "eval_per_time.csv");
  EXPECT_EQ(per_time.rows.size(), 6u);
  const CsvTable summary = read_csv(root_ / "eval" / "eval_summary.csv");
  bool saw_count = false;
  for (const auto& row : summary.rows) {
    if (row[0] == "test_videos") {
      EXPECT_EQ(row[1], "4");
      saw_count = true;
    }
  }
  EXPECT_TRUE(saw_count);
  const auto pv = per_time.numeric_column("posterior_variance");
  const auto qv = per_time.numeric_column("prior_variance");
  for (std::size_t i = 0; i < pv.size(); ++i) EXPECT_LE(pv[i], qv[i] + 1e-12);
  EXPECT_TRUE(std::isfinite(r.a_spectral_error));
}

TEST_F(CliPipeline, PosteriorShrinksAndHugeNoiseGivesPrior) {
  const fs::path ck = root_ / "run" / "checkpoint.bin";
  cmd_posterior({Common{tiny_config(), root_ / "post", 0}, root_ / "data", ck, 2, 0.0});
  const CsvTable t = read_csv(root_ / "post" / "posterior.csv");
  ASSERT_EQ(t.rows.size(), 12u);
  const auto pv = t.numeric_column("posterior_variance");
  const auto qv = t.numeric_column("prior_variance");
  for (std::size_t i = 0; i < pv.size(); ++i) EXPECT_LE(pv[i], qv[i] + 1e-12);

  cmd_posterior({Common{tiny_config(), root_ / "post_wide", 0}, root_ / "data", ck, 2, 1e12});
  const CsvTable w = read_csv(root_ / "post_wide" / "posterior.csv");
  const auto pm = w.numeric_column("posterior_mean");
  const auto qm = w.numeric_column("prior_mean");
  const auto wv = w.numeric_column("posterior_variance");
  const auto wq = w.numeric_column("prior_variance");
  for (std::size_t i = 0; i < pm.size(); ++i) {
    EXPECT_NEAR(pm[i], qm[i], 1e-6);
    EXPECT_NEAR(wv[i], wq[i], 1e-6);
  }
  EXPECT_THROW(cmd_posterior({Common{tiny_config(), root_ / "x", 0}, root_ / "data", ck, 16, 0.0}),
               std::out_of_range);
}

TEST_F(CliPipeline, CompareBaselineIsBlockDiagonal) {
  cmd_compare({Common{tiny_config(), root_ / "cmp", 0}, root_ / "data",
               root_ / "run" / "checkpoint.bin"});
  const Matrix se = read_matrix_csv(root_ / "cmp" / "se_cov.csv");
  ASSERT_EQ(se.rows(), 12);
  EXPECT_TRUE(se.block(0, 6, 6, 6).isZero(0.0));
  EXPECT_TRUE(se.block(6, 0, 6, 6).isZero(0.0));
  const CsvTable fit = read_csv(root_ / "cmp" / "se_fit.csv");
  EXPECT_EQ(fit.rows.size(), 21u);
  EXPECT_EQ(fit.rows.front()[0], "0");
  EXPECT_EQ(read_csv(root_ / "cmp" / "se_hyper.csv").rows.size(), 2u);
  EXPECT_EQ(read_matrix_csv(root_ / "cmp" / "segp_cov.csv").rows(), 12);
}

int run(const std::string& args) {
  const std::string cmd = std::string(SEGP_LAB_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Executable, ExitCodes) {
  const fs::path dir = fs::temp_directory_path() / "segp_test_cli_exe";
  fs::remove_all(dir);
  fs::create_directories(dir);
  { std::ofstream(dir / "bad.json") << R"({"dataset": {"colour": 1}})"; }
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("datagen"), 1);  // --out missing
  EXPECT_EQ(run("datagen --config " + (dir / "bad.json").string() + " --out " + dir.string()), 1);
  EXPECT_EQ(run("datagen --count 2 --out " + (dir / "d").string()), 0);
  EXPECT_EQ(run("kernel -v --out " + (dir / "k").string()), 0);
  fs::create_directories(dir / "empty");
  EXPECT_EQ(run("compare --out " + (dir / "c").string() + " --data " + (dir / "nowhere").string()),
            1);
  EXPECT_EQ(run("compare --out " + (dir / "c").string() + " --data " + (dir / "empty").string()),
            2);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace segp::cli
