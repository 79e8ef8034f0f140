#ifndef SEGP_LAB_COMMANDS_HPP
#define SEGP_LAB_COMMANDS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "segp/config.hpp"

namespace segp::cli {

/// Settings shared by every subcommand. `config` already has command-line
/// overrides applied.
struct Common {
  AppConfig config;
  std::filesystem::path out;
  int verbosity = 0;
};

struct DatagenArgs {
  Common common;
};

/// Writes the dataset described by config.dataset (seed and count included).
void cmd_datagen(const DatagenArgs& args);

struct KernelArgs {
  Common common;
  /// Use the learned A of a checkpoint instead of the configured system.
  std::optional<std::filesystem::path> checkpoint;
};

/// kernel_mean.csv (time, y0, ...) and kernel_cov.csv (dimension-major
/// covariance over the observation grid).
void cmd_kernel(const KernelArgs& args);

struct CompareArgs {
  Common common;
  std::filesystem::path data;
  std::optional<std::filesystem::path> checkpoint;
};

/// segp_cov.csv, se_cov.csv, se_fit.csv (step, log evidence per trajectory;
/// step 0 is the initial guess)
/// and se_hyper.csv, with the SE baseline fitted to the training latents.
void cmd_compare(const CompareArgs& args);

struct TrainArgs {
  Common common;
  std::filesystem::path data;
};

/// metrics.csv, a_history.csv, checkpoint.bin and config.json under out.
void cmd_train(const TrainArgs& args);

struct EvalArgs {
  Common common;
  std::filesystem::path data;
  std::filesystem::path checkpoint;
};

/// eval_per_time.csv and eval_summary.csv on the held-out split.
EvalReport cmd_eval(const EvalArgs& args);

struct PosteriorArgs {
  Common common;
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  int video = 0;
  double variance_override = 0.0;
};

/// posterior.csv with one row per (dimension, time).
void cmd_posterior(const PosteriorArgs& args);

}  // namespace segp::cli

#endif  // SEGP_LAB_COMMANDS_HPP
