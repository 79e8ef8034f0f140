#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Flags {
  std::string config;
  std::string out;
  std::string data;
  std::string ckpt;
  std::optional<std::uint64_t> seed;
  std::optional<int> count;
  std::optional<int> epochs;
  std::optional<int> baseline_steps;
  std::optional<std::string> kl_order;
  bool no_gradient_check = false;
  int video = 0;
  double variance_override = 0.0;
  int verbosity = 0;
};

segp::cli::Common common_from(const Flags& f) {
  segp::cli::Common c;
  if (!f.config.empty()) c.config = segp::load_app_config(f.config);
  c.out = f.out;
  c.verbosity = f.verbosity;
  if (f.count) c.config.dataset.count = *f.count;
  if (f.epochs) c.config.train.epochs = *f.epochs;
  if (f.baseline_steps) c.config.baseline.steps = *f.baseline_steps;
  if (f.kl_order) c.config.train.kl_order = segp::parse_kl_order(*f.kl_order);
  if (f.no_gradient_check) c.config.train.gradient_check = false;
  try {
    c.config.dataset.validate();
    c.config.train.validate();
  } catch (const std::invalid_argument& e) {
    throw segp::ConfigError(e.what());
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segp-lab: GP priors from semi-contracting LTI systems, for latent video dynamics"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_flag("-v,--verbose", f.verbosity, "Progress messages on stderr (repeat for more)");

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file; unknown keys are errors")
        ->check(CLI::ExistingFile);
  };
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", f.out, "Output directory (created if missing)")->required();
  };

  auto* datagen = app.add_subcommand("datagen", "Simulate and render a video dataset");
  add_config(datagen);
  add_out(datagen);
  datagen->add_option("--seed", f.seed, "Dataset seed (overrides dataset.seed)");
  datagen->add_option("--count", f.count, "Number of videos (overrides dataset.count)")
      ->check(CLI::PositiveNumber);

  auto* kernel = app.add_subcommand("kernel", "Prior mean and covariance over the frame grid");
  add_config(kernel);
  add_out(kernel);
  kernel->add_option("--ckpt", f.ckpt, "Use the learned A from this checkpoint")
      ->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "SEGP prior against a fitted SE baseline");
  add_config(compare);
  add_out(compare);
  compare->add_option("--data", f.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--ckpt", f.ckpt, "Use the learned A from this checkpoint")
      ->check(CLI::ExistingFile);
  compare->add_option("--baseline-steps", f.baseline_steps,
                      "Gradient steps for the SE fit (overrides baseline.steps)")
      ->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "Train the VAE with the SEGP prior");
  add_config(train);
  add_out(train);
  train->add_option("--data", f.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--seed", f.seed, "Training seed (overrides train.seed)");
  train->add_option("--epochs", f.epochs, "Epoch budget (overrides train.epochs)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--kl-order", f.kl_order, "posterior_prior or prior_posterior")
      ->check(CLI::IsMember({"posterior_prior", "prior_posterior"}));
  train->add_flag("--no-gradient-check", f.no_gradient_check,
                  "Skip the finite-difference check before training");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the held-out split");
  add_config(eval);
  add_out(eval);
  eval->add_option("--data", f.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--ckpt", f.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);

  auto* posterior = app.add_subcommand("posterior", "Posterior and prior marginals for one video");
  add_config(posterior);
  add_out(posterior);
  posterior->add_option("--data", f.data, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  posterior->add_option("--ckpt", f.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  posterior->add_option("--video", f.video, "Video index in the dataset")
      ->check(CLI::NonNegativeNumber);
  posterior->add_option("--variance-override", f.variance_override,
                        "Replace every encoder variance with this value (> 0)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e);
    return kUsageError;
  }

  try {
    segp::cli::Common common = common_from(f);
    if (datagen->parsed()) {
      if (f.seed) common.config.dataset.seed = *f.seed;
      segp::cli::cmd_datagen({common});
    } else if (kernel->parsed()) {
      segp::cli::KernelArgs a{common, std::nullopt};
      if (!f.ckpt.empty()) a.checkpoint = f.ckpt;
      segp::cli::cmd_kernel(a);
    } else if (compare->parsed()) {
      segp::cli::CompareArgs a{common, f.data, std::nullopt};
      if (!f.ckpt.empty()) a.checkpoint = f.ckpt;
      segp::cli::cmd_compare(a);
    } else if (train->parsed()) {
      if (f.seed) common.config.train.seed = *f.seed;
      segp::cli::cmd_train({common, f.data});
    } else if (eval->parsed()) {
      const segp::EvalReport r = segp::cli::cmd_eval({common, f.data, f.ckpt});
      std::cout << "posterior_abs_error " << r.posterior_abs_error_mean << "\nprior_abs_error "
                << r.prior_abs_error_mean << "\na_spectral_error " << r.a_spectral_error
                << "\nrecon_per_pixel " << r.recon_per_pixel << '\n';
    } else if (posterior->parsed()) {
      segp::cli::cmd_posterior({common, f.data, f.ckpt, f.video, f.variance_override});
    }
  } catch (const segp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
