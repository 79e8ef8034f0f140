#include "commands.hpp"

#include <fstream>
#include <iostream>

#include "segp/checkpoint.hpp"
#include "segp/csv.hpp"
#include "segp/dataset_io.hpp"
#include "segp/gp_infer.hpp"
#include "segp/segp_prior.hpp"
#include "segp/train.hpp"
#include "segp/vae.hpp"

namespace segp::cli {

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

void log(const Common& c, const std::string& msg) {
  if (c.verbosity > 0) std::cerr << msg << '\n';
}

LtiSystem configured_system(const DatasetConfig& cfg) { return cfg.system(); }

/// System with the learned state matrix of a checkpoint and the fixed
/// B, C, D and initial state of the dataset recipe.
LtiSystem learned_system(const Checkpoint& ck, const DatasetConfig& cfg,
                         const QuadratureConfig& quad) {
  const ModelContext ctx = ModelContext::from_dataset(cfg, quad, ck.scales);
  const SegpPrior prior = build_prior(ck.state.params, ctx);
  LtiSystem sys = cfg.system();
  sys.a = prior.state.a;
  sys.p = prior.state.p;
  return sys;
}

QuadratureConfig checkpoint_quadrature(const Checkpoint& ck) {
  if (ck.config_json.empty()) return QuadratureConfig{};
  return app_config_from_json(nlohmann::json::parse(ck.config_json)).quadrature;
}

Matrix training_latents(const Dataset& data, double train_fraction) {
  const SplitIndices split = split_dataset(data.count, train_fraction);
  Matrix out(data.latents.rows(), static_cast<Eigen::Index>(split.train.size()));
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = data.latents.col(split.train[i]);
  }
  return out;
}

}  // namespace

void cmd_datagen(const DatagenArgs& args) {
  const DatasetConfig& cfg = args.common.config.dataset;
  ensure_dir(args.common.out);
  const Dataset data = generate_dataset(cfg, cfg.seed, args.common.out);
  log(args.common, "wrote " + std::to_string(data.count) + " videos to " +
                       args.common.out.string());
}

void cmd_kernel(const KernelArgs& args) {
  const AppConfig& cfg = args.common.config;
  LtiSystem sys = configured_system(cfg.dataset);
  if (args.checkpoint) {
    const Checkpoint ck = read_checkpoint(*args.checkpoint);
    sys = learned_system(ck, cfg.dataset, cfg.quadrature);
  }
  const TimeGrid grid = cfg.dataset.grid();
  const GaussianOverGrid g = assemble_prior(grid, sys, cfg.dataset.input(), cfg.quadrature);
  ensure_dir(args.common.out);

  std::vector<std::string> header{"time"};
  for (int j = 0; j < g.dim; ++j) header.push_back("y" + std::to_string(j));
  CsvWriter mean(args.common.out / "kernel_mean.csv", header);
  for (int i = 0; i < grid.size(); ++i) {
    std::vector<double> row{grid[i]};
    for (int j = 0; j < g.dim; ++j) row.push_back(g.mean(g.index(j, i)));
    mean.row(row);
  }
  write_matrix_csv(args.common.out / "kernel_cov.csv", g.cov);
  log(args.common, "kernel written to " + args.common.out.string());
}

void cmd_compare(const CompareArgs& args) {
  const AppConfig& cfg = args.common.config;
  const Dataset data = load_dataset(args.data);
  const DatasetConfig& dc = data.config;
  LtiSystem sys = configured_system(dc);
  QuadratureConfig quad = cfg.quadrature;
  if (args.checkpoint) {
    const Checkpoint ck = read_checkpoint(*args.checkpoint);
    quad = checkpoint_quadrature(ck);
    sys = learned_system(ck, dc, quad);
  }
  const TimeGrid grid = dc.grid();
  const GaussianOverGrid segp_prior = assemble_prior(grid, sys, dc.input(), quad);

  const Matrix latents = training_latents(data, cfg.train.train_fraction);
  const NoiseModel noise = NoiseModel::uniform(latents.rows(), dc.noise_var);
  const SeFitResult fit =
      fit_se_baseline(grid, latents, noise, cfg.baseline.steps, cfg.baseline.step_size);
  const GaussianOverGrid se = se_baseline_prior(grid, fit.hyper);

  ensure_dir(args.common.out);
  write_matrix_csv(args.common.out / "segp_cov.csv", segp_prior.cov);
  write_matrix_csv(args.common.out / "se_cov.csv", se.cov);
  CsvWriter hist(args.common.out / "se_fit.csv", {"step", "log_evidence"});
  for (std::size_t s = 0; s < fit.history.size(); ++s) {
    hist.row(std::vector<double>{static_cast<double>(s), fit.history[s]});
  }
  CsvWriter hyper(args.common.out / "se_hyper.csv", {"dim", "variance", "lengthscale"});
  for (Eigen::Index j = 0; j < fit.hyper.dim(); ++j) {
    hyper.row(std::vector<double>{static_cast<double>(j), fit.hyper.variance(j),
                                  fit.hyper.lengthscale(j)});
  }
  log(args.common, "comparison written to " + args.common.out.string());
}

void cmd_train(const TrainArgs& args) {
  AppConfig cfg = args.common.config;
  const Dataset data = load_dataset(args.data);
  // The recipe of the data on disk wins over the config file.
  cfg.dataset = data.config;
  ensure_dir(args.common.out);
  const std::string config_text = to_json(cfg).dump(2);
  {
    std::ofstream out(args.common.out / "config.json");
    out << config_text << '\n';
    if (!out) throw std::runtime_error("cannot write config.json");
  }
  TrainOptions opts;
  opts.out_dir = args.common.out;
  opts.config_json = config_text;
  if (args.common.verbosity > 0) {
    opts.on_metrics = [](const EpochMetrics& m) {
      std::cerr << "epoch " << m.epoch << ' ' << m.split << " recon/pixel " << m.recon_per_pixel
                << " kl " << m.kl_unweighted << " |A|_1 " << m.l1_a << " loss " << m.loss << '\n';
    };
  }
  (void)train(data, cfg.model_shape(), cfg.quadrature, cfg.train, opts);
}

EvalReport cmd_eval(const EvalArgs& args) {
  const Checkpoint ck = read_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(args.data);
  const QuadratureConfig quad = checkpoint_quadrature(ck);
  double fraction = args.common.config.train.train_fraction;
  if (!ck.config_json.empty()) {
    fraction = app_config_from_json(nlohmann::json::parse(ck.config_json)).train.train_fraction;
  }
  const ModelContext ctx = ModelContext::from_dataset(data.config, quad, ck.scales);
  const SplitIndices split = split_dataset(data.count, fraction);
  const EvalReport r = evaluate(ck.state.params, ctx, data, split.test, data.config.a);

  ensure_dir(args.common.out);
  CsvWriter per_time(args.common.out / "eval_per_time.csv",
                     {"time", "posterior_abs_error", "prior_abs_error", "posterior_variance",
                      "prior_variance"});
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    per_time.row(std::vector<double>{r.times[i], r.posterior_abs_error[i], r.prior_abs_error[i],
                                     r.posterior_variance[i], r.prior_variance[i]});
  }
  CsvWriter summary(args.common.out / "eval_summary.csv", {"metric", "value"});
  summary.row({"posterior_abs_error_mean", format_double(r.posterior_abs_error_mean)});
  summary.row({"prior_abs_error_mean", format_double(r.prior_abs_error_mean)});
  summary.row({"a_spectral_error", format_double(r.a_spectral_error)});
  summary.row({"recon_per_pixel", format_double(r.recon_per_pixel)});
  summary.row({"test_videos", std::to_string(split.test.size())});
  for (Eigen::Index i = 0; i < r.a_learned.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.a_learned.cols(); ++j) {
      summary.row({"a" + std::to_string(i) + std::to_string(j), format_double(r.a_learned(i, j))});
    }
  }
  log(args.common, "evaluation written to " + args.common.out.string());
  return r;
}

void cmd_posterior(const PosteriorArgs& args) {
  const Checkpoint ck = read_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(args.data);
  if (args.video < 0 || args.video >= data.count) {
    throw std::out_of_range("video index " + std::to_string(args.video) + " outside [0, " +
                            std::to_string(data.count) + ")");
  }
  const ModelContext ctx =
      ModelContext::from_dataset(data.config, checkpoint_quadrature(ck), ck.scales);
  const SegpPrior prior = build_prior(ck.state.params, ctx);
  const PosteriorSummary s = infer_posterior(data.frame_matrix(args.video), ck.state.params,
                                             prior, ctx, args.variance_override);

  ensure_dir(args.common.out);
  CsvWriter out(args.common.out / "posterior.csv",
                {"dim", "time", "posterior_mean", "posterior_variance", "prior_mean",
                 "prior_variance", "encoder_mean", "encoder_variance", "truth"});
  const int n = ctx.frames();
  for (int j = 0; j < ctx.latent_dim(); ++j) {
    for (int i = 0; i < n; ++i) {
      const int k = j * n + i;
      out.row(std::vector<double>{static_cast<double>(j), ctx.grid[i], s.posterior.mean(k),
                                  s.posterior.cov(k, k), s.prior.mean(k), s.prior.cov(k, k),
                                  s.encoded.mean(k), s.encoded.variance(k),
                                  data.latents(k, args.video)});
    }
  }
  log(args.common, "posterior written to " + args.common.out.string());
}

}  // namespace segp::cli
