#include "segp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "segp/checkpoint.hpp"
#include "segp/csv.hpp"

namespace segp {

namespace {

Matrix kaiming(Eigen::Index rows, Eigen::Index fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  Matrix w(rows, fan_in);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < fan_in; ++j) w(i, j) = sd * rng.normal();
  }
  return w;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = sd * rng.normal();
  }
  return m;
}

bool all_finite(const ModelParams& p, std::string* bad) {
  for (const auto& [name, t] : p.tensors()) {
    if (!t->allFinite()) {
      if (bad != nullptr) *bad = name;
      return false;
    }
  }
  return true;
}

std::vector<std::string> metrics_header() {
  return {"epoch", "split", "recon_per_pixel", "kl_unweighted", "l1_A", "loss"};
}

void write_metrics_row(CsvWriter& w, const EpochMetrics& m) {
  w.row({std::to_string(m.epoch), m.split, format_double(m.recon_per_pixel),
         format_double(m.kl_unweighted), format_double(m.l1_a), format_double(m.loss)});
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("train: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train: adam_eps must be > 0");
  if (!(beta >= 0.0) || !(lambda_start >= 0.0) || !(lambda_end >= 0.0)) {
    throw std::invalid_argument("train: beta and lambda must be >= 0");
  }
  if (epochs < 0 || batch_size < 1) {
    throw std::invalid_argument("train: need epochs >= 0 and batch_size >= 1");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train: train_fraction must lie in (0, 1)");
  }
  if (eval_train_videos < 0 || !(v2_init_std >= 0.0)) {
    throw std::invalid_argument("train: eval_train_videos and v2_init_std must be >= 0");
  }
}

double TrainConfig::lambda_at(int epoch) const {
  if (epoch <= 1 || epochs <= 1) return lambda_start;
  const double frac = static_cast<double>(std::min(epoch, epochs) - 1) / (epochs - 1);
  return lambda_start + (lambda_end - lambda_start) * frac;
}

void adamw_step(TrainState& state, const ModelParams& grad, const TrainConfig& cfg) {
  std::string bad;
  if (!all_finite(grad, &bad)) {
    throw NumericalError("adamw_step: non-finite gradient in " + bad);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  auto p = state.params.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  const auto g = grad.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    Matrix& pi = *p[i].second;
    Matrix& mi = *m[i].second;
    Matrix& vi = *v[i].second;
    const Matrix& gi = *g[i].second;
    mi = cfg.adam_beta1 * mi + (1.0 - cfg.adam_beta1) * gi;
    vi = cfg.adam_beta2 * vi + (1.0 - cfg.adam_beta2) * gi.cwiseProduct(gi);
    const auto m_hat = mi.array() / c1;
    const auto v_hat = vi.array() / c2;
    pi.array() -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.adam_eps) +
                                       cfg.weight_decay * pi.array());
  }
}

TrainState init_params(const ModelShape& shape, const TrainConfig& cfg, std::uint64_t seed) {
  shape.validate();
  Rng rng = Rng::stream(seed, 0);
  TrainState st;
  ModelParams& p = st.params;
  p.shape = shape;
  const int g2 = shape.feature_grid * shape.feature_grid;
  const int m = shape.latent_dim;
  const int n = shape.state_dim;
  p.enc.w1 = kaiming(shape.encoder_hidden, shape.pixels(), rng);
  p.enc.b1 = Matrix::Zero(shape.encoder_hidden, 1);
  p.enc.w2 = kaiming(g2, shape.encoder_hidden, rng);
  p.enc.b2 = Matrix::Zero(g2, 1);
  p.enc.head_scale = Matrix::Ones(m, 1);
  p.enc.head_bias = Matrix::Zero(m, 1);
  p.enc.logvar = Matrix::Constant(m, 1, cfg.logvar_init);
  p.enc.temperature = shape.temperature;
  p.dec.w1 = kaiming(shape.decoder_hidden, m, rng);
  p.dec.b1 = Matrix::Zero(shape.decoder_hidden, 1);
  p.dec.w2 = kaiming(shape.pixels(), shape.decoder_hidden, rng);
  p.dec.b2 = Matrix::Zero(shape.pixels(), 1);
  p.v1_raw = (1.0 - StableLtiParams::kDiagEpsilon) * Matrix::Identity(n, n);
  p.v2_raw = normal_matrix(n, n, cfg.v2_init_std, rng).triangularView<Eigen::Lower>();
  p.v3_raw = Matrix::Zero(n, n);
  st.first_moment = p.zeros_like();
  st.second_moment = p.zeros_like();
  st.rng = Rng::stream(seed, 1);
  return st;
}

Vector latent_scales(const Dataset& data, const std::vector<int>& indices) {
  const int n = data.config.frames;
  const int m = data.config.latent_dim();
  Vector s = Vector::Zero(m);
  for (int k : indices) {
    for (int j = 0; j < m; ++j) {
      s(j) = std::max(s(j), data.latents.col(k).segment(j * n, n).cwiseAbs().maxCoeff());
    }
  }
  for (int j = 0; j < m; ++j) {
    if (!(s(j) > 0.0)) s(j) = 1.0;
  }
  return s;
}

SplitIndices split_dataset(int count, double train_fraction) {
  if (count < 2) throw std::invalid_argument("split_dataset: need at least two videos");
  int n_train = static_cast<int>(std::floor(train_fraction * count));
  n_train = std::clamp(n_train, 1, count - 1);
  SplitIndices s;
  s.train.resize(static_cast<std::size_t>(n_train));
  s.test.resize(static_cast<std::size_t>(count - n_train));
  std::iota(s.train.begin(), s.train.end(), 0);
  std::iota(s.test.begin(), s.test.end(), n_train);
  return s;
}

EpochMetrics evaluate_split(const ModelParams& params, const ModelContext& ctx,
                            const Dataset& data, const std::vector<int>& indices,
                            const LossSettings& settings) {
  EpochMetrics out;
  if (indices.empty()) return out;
  const SegpPrior prior = build_prior(params, ctx);
  const double pixels = static_cast<double>(params.shape.pixels()) * ctx.frames();
  const Vector none;
  for (int k : indices) {
    const LossTerms t =
        video_loss(data.frame_matrix(k), params, prior, ctx, settings, none, nullptr);
    out.recon_per_pixel += t.recon / pixels;
    out.kl_unweighted += t.kl;
    out.loss += t.loss;
    out.l1_a = t.l1;
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.recon_per_pixel *= inv;
  out.kl_unweighted *= inv;
  out.loss *= inv;
  return out;
}

GradientCheckResult gradient_check(std::uint64_t seed, const GradientCheckOptions& opt) {
  Rng rng = Rng::stream(seed, 2);
  DatasetConfig dc;
  dc.canvas = opt.canvas;
  dc.frames = opt.frames;
  dc.ball_radius = std::min(dc.ball_radius, (opt.canvas - 1) / 2);
  Vector scales(2);
  scales << 0.5 + rng.uniform() * 1.5, 0.5 + rng.uniform() * 6.0;
  const ModelContext ctx = ModelContext::from_dataset(dc, QuadratureConfig{}, scales);

  ModelShape shape;
  shape.canvas = opt.canvas;
  shape.feature_grid = opt.feature_grid;
  shape.encoder_hidden = opt.encoder_hidden;
  shape.decoder_hidden = opt.decoder_hidden;
  shape.latent_dim = 2;
  shape.state_dim = 2;
  shape.temperature = 0.5 + rng.uniform();
  TrainConfig tc;
  ModelParams params = init_params(shape, tc, rng.next_u64()).params;
  // Generic values everywhere so that no unit sits on a kink.
  for (auto& [name, t] : params.tensors()) {
    if (name.find(".b") != std::string::npos) *t = normal_matrix(t->rows(), t->cols(), 0.3, rng);
  }
  params.enc.head_scale = Matrix::Ones(2, 1) + normal_matrix(2, 1, 0.3, rng);
  params.enc.head_bias = normal_matrix(2, 1, 0.3, rng);
  for (int j = 0; j < 2; ++j) params.enc.logvar(j, 0) = -3.0 + 4.0 * rng.uniform();
  params.v1_raw = normal_matrix(2, 2, 0.4, rng);
  for (int i = 0; i < 2; ++i) params.v1_raw(i, i) = 0.5 + 0.5 * rng.uniform();
  params.v2_raw = normal_matrix(2, 2, 0.5, rng);
  for (int i = 0; i < 2; ++i) params.v2_raw(i, i) = 0.2 + 0.6 * rng.uniform();
  params.v3_raw = normal_matrix(2, 2, 0.5, rng);

  std::vector<Matrix> frames;
  std::vector<Vector> eps;
  const Eigen::Index pixels = static_cast<Eigen::Index>(opt.canvas) * opt.canvas;
  for (int v = 0; v < opt.videos; ++v) {
    Matrix f(pixels, opt.frames);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    frames.push_back(f);
    eps.push_back(rng.normal_vector(2 * opt.frames));
  }
  LossSettings settings;
  settings.beta = 0.5 + 2.5 * rng.uniform();
  settings.lambda = 0.3;
  settings.kl_order = seed % 2 == 0 ? KlOrder::kPosteriorPrior : KlOrder::kPriorPosterior;

  ModelParams analytic = params.zeros_like();
  (void)batch_loss(frames, eps, params, ctx, settings, &analytic);

  GradientCheckResult result;
  std::ostringstream detail;
  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = analytic.tensors();
  auto eval = [&]() { return batch_loss(frames, eps, probe, ctx, settings, nullptr).loss; };
  for (std::size_t ti = 0; ti < probe_tensors.size(); ++ti) {
    const std::string& name = probe_tensors[ti].first;
    Matrix& t = *probe_tensors[ti].second;
    const Matrix& g = *grad_tensors[ti].second;
    const std::string group = ModelParams::group_of(name);
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(t.size()));
    std::iota(entries.begin(), entries.end(), 0);
    if (opt.entries_per_tensor > 0 &&
        entries.size() > static_cast<std::size_t>(opt.entries_per_tensor)) {
      deterministic_shuffle(entries.begin(), entries.end(), rng);
      entries.resize(static_cast<std::size_t>(opt.entries_per_tensor));
    }
    for (Eigen::Index e : entries) {
      const double x = t.data()[e];
      const double h = opt.step * std::max(1.0, std::abs(x));
      auto at = [&](double dx) {
        t.data()[e] = x + dx;
        return eval();
      };
      // Five-point central stencil.
      const double fd = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      t.data()[e] = x;
      const double a = g.data()[e];
      const double tol = std::max(opt.rel_tol * std::abs(fd), opt.abs_tol);
      const double ratio = std::abs(a - fd) / tol;
      double& worst = result.worst_ratio[group];
      worst = std::max(worst, ratio);
      if (ratio > 1.0) {
        result.passed = false;
        detail << name << "[" << e << "]: analytic " << a << " vs fd " << fd << "\n";
      }
    }
  }
  result.detail = detail.str();
  return result;
}

TrainResult train(const Dataset& data, const ModelShape& shape, const QuadratureConfig& quad,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (shape.canvas != data.config.canvas || shape.latent_dim != data.config.latent_dim() ||
      shape.state_dim != data.config.a.rows()) {
    throw std::invalid_argument("train: model shape does not match the dataset");
  }
  if (cfg.gradient_check) {
    const GradientCheckResult gc = gradient_check(cfg.seed);
    if (!gc.passed) throw NumericalError("gradient check failed before training:\n" + gc.detail);
  }
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + options.out_dir.string());

  const SplitIndices split = split_dataset(data.count, cfg.train_fraction);
  TrainResult result;
  result.scales = latent_scales(data, split.train);
  const ModelContext ctx = ModelContext::from_dataset(data.config, quad, result.scales);
  result.state = init_params(shape, cfg, cfg.seed);
  TrainState& st = result.state;

  std::vector<int> train_eval(split.train.begin(),
                              split.train.begin() + std::min<std::ptrdiff_t>(
                                  cfg.eval_train_videos,
                                  static_cast<std::ptrdiff_t>(split.train.size())));

  CsvWriter metrics(options.out_dir / "metrics.csv", metrics_header());
  std::vector<std::string> a_header{"epoch", "contraction_margin", "spectral_abscissa"};
  for (int i = 0; i < shape.state_dim; ++i) {
    for (int j = 0; j < shape.state_dim; ++j) {
      a_header.push_back("a" + std::to_string(i) + std::to_string(j));
    }
  }
  CsvWriter a_history(options.out_dir / "a_history.csv", a_header);
  const auto ckpt_path = options.out_dir / "checkpoint.bin";

  auto log_epoch = [&](int epoch) {
    const LossSettings settings{cfg.beta, cfg.lambda_at(epoch), cfg.kl_order};
    const SegpPrior prior = build_prior(st.params, ctx);
    const double margin = contraction_margin(prior.state.a, prior.state.p);
    if (!check_semi_contracting(prior.state.a, prior.state.p, 1e-8)) {
      std::ostringstream msg;
      msg << "realized A lost semi-contraction at epoch " << epoch << " (margin " << margin << ")";
      throw NumericalError(msg.str());
    }
    result.contraction_margins.push_back(margin);
    std::vector<double> arow{static_cast<double>(epoch), margin,
                             spectral_abscissa(prior.state.a)};
    for (int i = 0; i < shape.state_dim; ++i) {
      for (int j = 0; j < shape.state_dim; ++j) arow.push_back(prior.state.a(i, j));
    }
    a_history.row(arow);
    for (const auto& [name, idx] : {std::pair<std::string, const std::vector<int>*>{"train", &train_eval},
                                    {"test", &split.test}}) {
      EpochMetrics m = evaluate_split(st.params, ctx, data, *idx, settings);
      m.epoch = epoch;
      m.split = name;
      write_metrics_row(metrics, m);
      result.metrics.push_back(m);
      if (options.on_metrics) options.on_metrics(m);
    }
    st.epoch = epoch;
    write_checkpoint(ckpt_path, st, result.scales, options.config_json);
  };

  log_epoch(0);
  const Eigen::Index mn = static_cast<Eigen::Index>(shape.latent_dim) * ctx.frames();
  std::vector<int> order = split.train;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const LossSettings settings{cfg.beta, cfg.lambda_at(epoch), cfg.kl_order};
    deterministic_shuffle(order.begin(), order.end(), st.rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Matrix> frames;
      std::vector<Vector> eps;
      for (std::size_t i = start; i < stop; ++i) {
        frames.push_back(data.frame_matrix(order[i]));
        eps.push_back(st.rng.normal_vector(mn));
      }
      ModelParams grad = st.params.zeros_like();
      const LossTerms t = batch_loss(frames, eps, st.params, ctx, settings, &grad);
      if (!std::isfinite(t.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch "
            << start / static_cast<std::size_t>(cfg.batch_size);
        throw NumericalError(msg.str());
      }
      adamw_step(st, grad, cfg);
    }
    log_epoch(epoch);
  }
  return result;
}

EvalReport evaluate(const ModelParams& params, const ModelContext& ctx, const Dataset& data,
                    const std::vector<int>& indices, const Matrix& true_a) {
  const int n = ctx.frames();
  const int angle = 1;
  EvalReport r;
  r.times = ctx.grid.points();
  r.posterior_abs_error.assign(static_cast<std::size_t>(n), 0.0);
  r.prior_abs_error.assign(static_cast<std::size_t>(n), 0.0);
  r.posterior_variance.assign(static_cast<std::size_t>(n), 0.0);
  r.prior_variance.assign(static_cast<std::size_t>(n), 0.0);
  const SegpPrior prior = build_prior(params, ctx);
  r.a_learned = prior.state.a;
  if (true_a.rows() == r.a_learned.rows() && true_a.cols() == r.a_learned.cols()) {
    r.a_spectral_error =
        Eigen::JacobiSVD<Matrix>(r.a_learned - true_a).singularValues()(0);
  } else {
    r.a_spectral_error = std::nan("");
  }
  if (indices.empty()) return r;
  const double pixels = static_cast<double>(params.shape.pixels()) * n;
  const Vector none;
  for (int k : indices) {
    const Matrix frames = data.frame_matrix(k);
    const PosteriorSummary s = infer_posterior(frames, params, prior, ctx);
    for (int i = 0; i < n; ++i) {
      const int idx = angle * n + i;
      const double truth = data.latents(idx, k);
      r.posterior_abs_error[static_cast<std::size_t>(i)] += std::abs(s.posterior.mean(idx) - truth);
      r.prior_abs_error[static_cast<std::size_t>(i)] += std::abs(s.prior.mean(idx) - truth);
      r.posterior_variance[static_cast<std::size_t>(i)] += s.posterior.cov(idx, idx);
      r.prior_variance[static_cast<std::size_t>(i)] += s.prior.cov(idx, idx);
    }
    r.recon_per_pixel +=
        video_loss(frames, params, prior, ctx, LossSettings{}, none, nullptr).recon / pixels;
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (int i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    r.posterior_abs_error[u] *= inv;
    r.prior_abs_error[u] *= inv;
    r.posterior_variance[u] *= inv;
    r.prior_variance[u] *= inv;
    r.posterior_abs_error_mean += r.posterior_abs_error[u] / n;
    r.prior_abs_error_mean += r.prior_abs_error[u] / n;
  }
  r.recon_per_pixel *= inv;
  return r;
}

}  // namespace segp
