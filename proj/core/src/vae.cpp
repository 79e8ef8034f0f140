#include "segp/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace segp {

namespace {

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string("model parameter has wrong shape: ") + name);
  }
}

void check_params(const ModelParams& p) {
  const ModelShape& s = p.shape;
  s.validate();
  const int g2 = s.feature_grid * s.feature_grid;
  require_shape(p.enc.w1, s.encoder_hidden, s.pixels(), "encoder.w1");
  require_shape(p.enc.b1, s.encoder_hidden, 1, "encoder.b1");
  require_shape(p.enc.w2, g2, s.encoder_hidden, "encoder.w2");
  require_shape(p.enc.b2, g2, 1, "encoder.b2");
  require_shape(p.enc.head_scale, s.latent_dim, 1, "encoder.head_scale");
  require_shape(p.enc.head_bias, s.latent_dim, 1, "encoder.head_bias");
  require_shape(p.enc.logvar, s.latent_dim, 1, "encoder.logvar");
  require_shape(p.dec.w1, s.decoder_hidden, s.latent_dim, "decoder.w1");
  require_shape(p.dec.b1, s.decoder_hidden, 1, "decoder.b1");
  require_shape(p.dec.w2, s.pixels(), s.decoder_hidden, "decoder.w2");
  require_shape(p.dec.b2, s.pixels(), 1, "decoder.b2");
  if (!(p.enc.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

double grid_coord(int index, int extent) {
  return extent > 1 ? -1.0 + 2.0 * index / (extent - 1) : 0.0;
}

Vector softmax_weights(const Vector& fmap, double tau) {
  const double top = fmap.maxCoeff();
  Vector w = ((fmap.array() - top) / tau).exp();
  w /= w.sum();
  return w;
}

// Forward values of the encoder kept for the reverse pass.
struct EncoderTape {
  Matrix z1;  // pre-activation, hidden x N
  Matrix h1;
  Matrix weights;  // softmax weights, G^2 x N
  std::vector<Keypoint> keypoints;
  std::vector<Polar> polar;
  Matrix features;  // m x N: (r, unwrapped theta)
  EncodedSequence out;
};

EncoderTape run_encoder(const Matrix& frames, const TimeGrid& grid, const ModelParams& params) {
  check_params(params);
  const ModelShape& s = params.shape;
  if (frames.rows() != s.pixels() || frames.cols() != grid.size()) {
    throw std::invalid_argument("encode_sequence: frames must be d^2 x N");
  }
  if (s.latent_dim != 2) throw std::invalid_argument("encoder head produces (r, theta) only");
  const int n = grid.size();
  const int g = s.feature_grid;
  EncoderTape t;
  t.z1 = params.enc.w1 * frames;
  t.z1.colwise() += params.enc.b1.col(0);
  t.h1 = t.z1.cwiseMax(0.0);
  Matrix f = params.enc.w2 * t.h1;
  f.colwise() += params.enc.b2.col(0);

  t.weights.resize(f.rows(), n);
  t.keypoints.resize(static_cast<std::size_t>(n));
  t.polar.resize(static_cast<std::size_t>(n));
  std::vector<double> theta(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    t.weights.col(i) = softmax_weights(f.col(i), params.enc.temperature);
    Keypoint kp;
    for (int row = 0; row < g; ++row) {
      for (int col = 0; col < g; ++col) {
        const double w = t.weights(row * g + col, i);
        kp.x += w * grid_coord(col, g);
        kp.y += w * grid_coord(row, g);
      }
    }
    t.keypoints[static_cast<std::size_t>(i)] = kp;
    t.polar[static_cast<std::size_t>(i)] = to_polar(kp.x, kp.y);
    theta[static_cast<std::size_t>(i)] = t.polar[static_cast<std::size_t>(i)].theta;
  }
  const std::vector<double> unwrapped = unwrap(theta);

  t.features.resize(2, n);
  for (int i = 0; i < n; ++i) {
    t.features(0, i) = t.polar[static_cast<std::size_t>(i)].r;
    t.features(1, i) = unwrapped[static_cast<std::size_t>(i)];
  }
  t.out.grid = grid;
  t.out.dim = 2;
  t.out.mean.resize(2 * n);
  t.out.variance.resize(2 * n);
  for (int j = 0; j < 2; ++j) {
    const double lv = std::clamp(params.enc.logvar(j, 0), kLogVarMin, kLogVarMax);
    for (int i = 0; i < n; ++i) {
      t.out.mean(j * n + i) =
          params.enc.head_scale(j, 0) * t.features(j, i) + params.enc.head_bias(j, 0);
      t.out.variance(j * n + i) = std::exp(lv);
    }
  }
  return t;
}

void encoder_backward(const EncoderTape& t, const Matrix& frames, const ModelParams& params,
                      const Vector& grad_mean, const Vector& grad_var, ModelParams& grad) {
  const int n = t.out.grid.size();
  const int g = params.shape.feature_grid;
  const double tau = params.enc.temperature;
  Matrix grad_feat(2, n);
  for (int j = 0; j < 2; ++j) {
    const double lv = params.enc.logvar(j, 0);
    const bool free = lv > kLogVarMin && lv < kLogVarMax;
    for (int i = 0; i < n; ++i) {
      const double gm = grad_mean(j * n + i);
      grad.enc.head_scale(j, 0) += gm * t.features(j, i);
      grad.enc.head_bias(j, 0) += gm;
      grad_feat(j, i) = gm * params.enc.head_scale(j, 0);
      if (free) grad.enc.logvar(j, 0) += grad_var(j * n + i) * t.out.variance(j * n + i);
    }
  }

  Matrix grad_f = Matrix::Zero(t.weights.rows(), n);
  for (int i = 0; i < n; ++i) {
    const Keypoint& kp = t.keypoints[static_cast<std::size_t>(i)];
    const Polar& pol = t.polar[static_cast<std::size_t>(i)];
    if (pol.r < kPolarOriginRadius) continue;
    const double gr = grad_feat(0, i);
    const double gth = grad_feat(1, i);
    const double r2 = pol.r * pol.r;
    const double gx = gr * kp.x / pol.r - gth * kp.y / r2;
    const double gy = gr * kp.y / pol.r + gth * kp.x / r2;
    for (int row = 0; row < g; ++row) {
      for (int col = 0; col < g; ++col) {
        const int q = row * g + col;
        grad_f(q, i) = t.weights(q, i) *
                       (gx * (grid_coord(col, g) - kp.x) + gy * (grid_coord(row, g) - kp.y)) / tau;
      }
    }
  }
  grad.enc.w2.noalias() += grad_f * t.h1.transpose();
  grad.enc.b2.col(0) += grad_f.rowwise().sum();
  Matrix grad_h1 = params.enc.w2.transpose() * grad_f;
  grad_h1 = grad_h1.cwiseProduct((t.z1.array() > 0.0).cast<double>().matrix());
  grad.enc.w1.noalias() += grad_h1 * frames.transpose();
  grad.enc.b1.col(0) += grad_h1.rowwise().sum();
}

struct DecoderTape {
  Matrix z1;
  Matrix h1;
  Matrix unclamped;
  Matrix probs;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
};

DecoderTape run_decoder(const Matrix& latents, const ModelParams& params) {
  DecoderTape t;
  t.z1 = params.dec.w1 * latents;
  t.z1.colwise() += params.dec.b1.col(0);
  t.h1 = t.z1.cwiseMax(0.0);
  Matrix logits = params.dec.w2 * t.h1;
  logits.colwise() += params.dec.b2.col(0);
  t.unclamped = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  t.clamped = (t.unclamped.array() < kProbClamp) || (t.unclamped.array() > 1.0 - kProbClamp);
  t.probs = t.unclamped.cwiseMax(kProbClamp).cwiseMin(1.0 - kProbClamp);
  return t;
}

double log_likelihood(const Matrix& frames, const Matrix& probs) {
  return (frames.array() * probs.array().log() +
          (1.0 - frames.array()) * (1.0 - probs.array()).log())
      .sum();
}

// d(-log-likelihood)/d(latents), accumulating the decoder gradient.
Matrix decoder_backward(const DecoderTape& t, const Matrix& frames, const Matrix& latents,
                        const ModelParams& params, ModelParams& grad) {
  Matrix grad_logits = (t.probs - frames).cwiseProduct((!t.clamped).cast<double>().matrix());
  grad.dec.w2.noalias() += grad_logits * t.h1.transpose();
  grad.dec.b2.col(0) += grad_logits.rowwise().sum();
  Matrix grad_h1 = params.dec.w2.transpose() * grad_logits;
  grad_h1 = grad_h1.cwiseProduct((t.z1.array() > 0.0).cast<double>().matrix());
  grad.dec.w1.noalias() += grad_h1 * latents.transpose();
  grad.dec.b1.col(0) += grad_h1.rowwise().sum();
  return params.dec.w1.transpose() * grad_h1;
}

Vector inverse_scale_per_entry(const ModelContext& ctx, int dim, int n) {
  if (ctx.scales.size() != dim || (ctx.scales.array() <= 0.0).any()) {
    throw std::invalid_argument("model context needs one positive scale per latent dimension");
  }
  Vector w(static_cast<Eigen::Index>(dim) * n);
  for (int j = 0; j < dim; ++j) w.segment(j * n, n).setConstant(1.0 / ctx.scales(j));
  return w;
}

struct PriorGradient {
  Vector mean;
  Matrix cov;
};

LossTerms video_loss_impl(const Matrix& frames, const ModelParams& params, const SegpPrior& prior,
                          const ModelContext& ctx, const LossSettings& settings,
                          const Vector& eps, ModelParams* grad, PriorGradient* prior_grad) {
  const int n = ctx.frames();
  const int dim = ctx.latent_dim();
  const Eigen::Index mn = static_cast<Eigen::Index>(dim) * n;
  if (eps.size() != 0 && eps.size() != mn) {
    throw std::invalid_argument("video_loss: eps must be empty or of size m * N");
  }

  const EncoderTape enc = run_encoder(frames, ctx.grid, params);
  const Vector& mu0 = prior.op->mean();
  const Matrix& k0 = prior.op->cov();
  const SameGridPosterior post = condition_same_grid(mu0, k0, enc.out.mean, enc.out.variance);

  // Feature-scaled KL with a standing relative jitter on both Gaussians.
  const Vector w = inverse_scale_per_entry(ctx, dim, n);
  const Vector prior_mean_s = w.cwiseProduct(mu0);
  Matrix prior_cov_s = w.asDiagonal() * k0 * w.asDiagonal();
  const Vector post_mean_s = w.cwiseProduct(post.mean);
  Matrix post_cov_s = w.asDiagonal() * post.cov * w.asDiagonal();
  const double delta = kStandingJitter * prior_cov_s.diagonal().mean();
  prior_cov_s.diagonal().array() += delta;
  post_cov_s.diagonal().array() += delta;
  const bool q_first = settings.kl_order == KlOrder::kPosteriorPrior;
  const KlGradient kl = q_first
      ? gaussian_kl_with_gradient(post_mean_s, post_cov_s, prior_mean_s, prior_cov_s)
      : gaussian_kl_with_gradient(prior_mean_s, prior_cov_s, post_mean_s, post_cov_s);

  // Reparameterised latent sample.
  Matrix sample_cov = post.cov;
  const double delta_u = kStandingJitter * post.cov.diagonal().mean();
  sample_cov.diagonal().array() += delta_u;
  const CholeskyFactor lu = jittered_cholesky(sample_cov);
  Vector y = post.mean;
  if (eps.size() != 0) y += lu.lower.triangularView<Eigen::Lower>() * eps;
  Matrix latents(dim, n);
  for (int j = 0; j < dim; ++j) latents.row(j) = y.segment(j * n, n).transpose();

  const DecoderTape dec = run_decoder(latents, params);
  LossTerms terms;
  terms.recon = -log_likelihood(frames, dec.probs);
  terms.kl = kl.value;
  terms.l1 = entrywise_l1(prior.state.a);
  terms.loss = terms.recon + settings.beta * terms.kl + settings.lambda * terms.l1;
  if (grad == nullptr) return terms;

  const Matrix grad_latents = decoder_backward(dec, frames, latents, params, *grad);
  Vector grad_y(mn);
  for (int j = 0; j < dim; ++j) grad_y.segment(j * n, n) = grad_latents.row(j).transpose();

  Vector grad_post_mean = grad_y;
  Matrix grad_post_cov = Matrix::Zero(mn, mn);
  if (eps.size() != 0) {
    const Matrix grad_lower = (grad_y * eps.transpose()).triangularView<Eigen::Lower>();
    const Matrix g_chol = cholesky_backward(lu.lower, grad_lower);
    grad_post_cov += g_chol;
    grad_post_cov.diagonal().array() += kStandingJitter * g_chol.trace() / static_cast<double>(mn);
  }

  const double beta = settings.beta;
  const Vector& g_qm = q_first ? kl.mean_p : kl.mean_q;
  const Matrix& g_qc = q_first ? kl.cov_p : kl.cov_q;
  const Vector& g_pm = q_first ? kl.mean_q : kl.mean_p;
  Matrix g_pc = q_first ? kl.cov_q : kl.cov_p;
  const double g_delta = g_qc.trace() + g_pc.trace();
  g_pc.diagonal().array() += kStandingJitter * g_delta / static_cast<double>(mn);
  grad_post_mean += beta * w.cwiseProduct(g_qm);
  grad_post_cov += beta * (w.asDiagonal() * g_qc * w.asDiagonal());

  const SameGridPosteriorGradient pg =
      condition_same_grid_backward(post, grad_post_mean, grad_post_cov);
  prior_grad->mean += pg.prior_mean + beta * w.cwiseProduct(g_pm);
  prior_grad->cov += pg.prior_cov + beta * (w.asDiagonal() * g_pc * w.asDiagonal());
  encoder_backward(enc, frames, params, pg.obs_mean, pg.noise_var, *grad);
  return terms;
}

void prior_backward(const SegpPrior& prior, const PriorGradient& pg, double lambda,
                    ModelParams& grad) {
  Matrix grad_a = prior.op->backward(pg.mean, symmetrize(pg.cov));
  grad_a += lambda * entrywise_sign(prior.state.a);
  const StableLtiGradient g = build_state_matrix_backward(prior.lti, prior.state, grad_a);
  grad.v1_raw += g.v1_raw;
  grad.v2_raw += g.v2_raw;
  grad.v3_raw += g.v3_raw;
}

PriorGradient zero_prior_gradient(const ModelContext& ctx) {
  const Eigen::Index mn = static_cast<Eigen::Index>(ctx.latent_dim()) * ctx.frames();
  return PriorGradient{Vector::Zero(mn), Matrix::Zero(mn, mn)};
}

}  // namespace

void ModelShape::validate() const {
  if (canvas < 1 || feature_grid < 1 || encoder_hidden < 1 || decoder_hidden < 1 ||
      latent_dim < 1 || state_dim < 1 || !(temperature > 0.0)) {
    throw std::invalid_argument("model shape: all sizes must be positive");
  }
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  return {{"encoder.w1", &enc.w1},         {"encoder.b1", &enc.b1},
          {"encoder.w2", &enc.w2},         {"encoder.b2", &enc.b2},
          {"encoder.head_scale", &enc.head_scale}, {"encoder.head_bias", &enc.head_bias},
          {"encoder.logvar", &enc.logvar}, {"decoder.w1", &dec.w1},
          {"decoder.b1", &dec.b1},         {"decoder.w2", &dec.w2},
          {"decoder.b2", &dec.b2},         {"segp.v1_raw", &v1_raw},
          {"segp.v2_raw", &v2_raw},        {"segp.v3_raw", &v3_raw}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (const auto& [name, ptr] : const_cast<ModelParams*>(this)->tensors()) {
    out.emplace_back(name, ptr);
  }
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& [name, t] : z.tensors()) t->setZero();
  return z;
}

std::string ModelParams::group_of(const std::string& tensor_name) {
  return tensor_name.substr(0, tensor_name.find('.'));
}

ModelContext ModelContext::from_dataset(const DatasetConfig& cfg, const QuadratureConfig& quad,
                                        Vector scales) {
  cfg.validate();
  ModelContext ctx;
  ctx.grid = cfg.grid();
  ctx.input = std::make_shared<const FineInput>(discretize_input(ctx.grid, cfg.input(), quad));
  ctx.b = cfg.b;
  ctx.c = cfg.c;
  ctx.d = cfg.d;
  ctx.m_x0 = cfg.m_x0;
  ctx.sigma_x0 = cfg.sigma_x0 * cfg.sigma_x0 * Matrix::Identity(cfg.a.rows(), cfg.a.rows());
  ctx.scales = std::move(scales);
  return ctx;
}

SegpPrior build_prior(const ModelParams& params, const ModelContext& ctx) {
  SegpPrior prior;
  prior.lti = StableLtiParams{params.v1_raw, params.v2_raw, params.v3_raw, ctx.b, ctx.c, ctx.d};
  prior.state = build_state_matrix(prior.lti);
  const LtiSystem sys{prior.state.a, ctx.b, ctx.c, ctx.d, prior.state.p, ctx.m_x0, ctx.sigma_x0};
  prior.op = std::make_shared<const PriorOperator>(ctx.grid, sys, ctx.input);
  return prior;
}

Keypoint spatial_softmax(const Vector& fmap, int height, int width, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("spatial_softmax: tau must be positive");
  if (height < 1 || width < 1 || fmap.size() != static_cast<Eigen::Index>(height) * width) {
    throw std::invalid_argument("spatial_softmax: feature map size mismatch");
  }
  const Vector w = softmax_weights(fmap, tau);
  Keypoint kp;
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      kp.x += w(row * width + col) * grid_coord(col, width);
      kp.y += w(row * width + col) * grid_coord(row, height);
    }
  }
  return kp;
}

Polar to_polar(double x, double y) {
  Polar p;
  p.r = std::hypot(x, y);
  p.theta = p.r < kPolarOriginRadius ? 0.0 : std::atan2(y, x);
  if (p.theta == -std::numbers::pi) p.theta = std::numbers::pi;
  return p;
}

std::vector<double> unwrap(const std::vector<double>& theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out(theta.size());
  double offset = 0.0;
  for (std::size_t t = 0; t < theta.size(); ++t) {
    if (t > 0) offset += two_pi * std::round((theta[t - 1] - theta[t]) / two_pi);
    out[t] = theta[t] + offset;
  }
  return out;
}

EncodedSequence encode_sequence(const Matrix& frames, const TimeGrid& grid,
                                const ModelParams& params) {
  return run_encoder(frames, grid, params).out;
}

EncodedSequence encode_sequence(const VideoSequence& video, const ModelParams& params) {
  return encode_sequence(video.as_matrix(), video.grid, params);
}

Vector decode(const Vector& y, const ModelParams& params) {
  check_params(params);
  if (y.size() != params.shape.latent_dim) throw std::invalid_argument("decode: wrong latent size");
  return run_decoder(Matrix(y), params).unclamped.col(0);
}

double bernoulli_log_likelihood(const Vector& frame, const Vector& probs) {
  if (frame.size() != probs.size()) {
    throw std::invalid_argument("bernoulli_log_likelihood: size mismatch");
  }
  const Vector p = probs.cwiseMax(kProbClamp).cwiseMin(1.0 - kProbClamp);
  return log_likelihood(frame, p);
}

GaussianOverGrid variational_posterior(const EncodedSequence& enc, const GaussianOverGrid& prior) {
  prior.validate_shapes();
  if (enc.dim != prior.dim || enc.grid.points() != prior.grid.points()) {
    throw std::invalid_argument("variational_posterior: encoder and prior grids differ");
  }
  const SameGridPosterior post = condition_same_grid(prior.mean, prior.cov, enc.mean, enc.variance);
  return GaussianOverGrid{post.mean, post.cov, prior.grid, prior.dim};
}

Vector reparam_sample(const GaussianOverGrid& posterior, const Vector& eps) {
  posterior.validate_shapes();
  if (eps.size() != posterior.mean.size()) {
    throw std::invalid_argument("reparam_sample: eps has wrong size");
  }
  Matrix cov = posterior.cov;
  cov.diagonal().array() += kStandingJitter * cov.diagonal().mean();
  const CholeskyFactor l = jittered_cholesky(cov);
  return posterior.mean + l.lower.triangularView<Eigen::Lower>() * eps;
}

LossTerms video_loss(const Matrix& frames, const ModelParams& params, const SegpPrior& prior,
                     const ModelContext& ctx, const LossSettings& settings, const Vector& eps,
                     ModelParams* grad) {
  if (settings.beta < 0.0 || settings.lambda < 0.0) {
    throw std::invalid_argument("loss: beta and lambda must be non-negative");
  }
  PriorGradient pg = zero_prior_gradient(ctx);
  const LossTerms terms = video_loss_impl(frames, params, prior, ctx, settings, eps, grad, &pg);
  if (grad != nullptr) prior_backward(prior, pg, settings.lambda, *grad);
  return terms;
}

LossTerms batch_loss(const std::vector<Matrix>& frames, const std::vector<Vector>& eps,
                     const ModelParams& params, const ModelContext& ctx,
                     const LossSettings& settings, ModelParams* grad) {
  if (frames.empty()) throw std::invalid_argument("batch_loss: empty batch");
  if (!eps.empty() && eps.size() != frames.size()) {
    throw std::invalid_argument("batch_loss: need one eps per video or none");
  }
  if (settings.beta < 0.0 || settings.lambda < 0.0) {
    throw std::invalid_argument("loss: beta and lambda must be non-negative");
  }
  const SegpPrior prior = build_prior(params, ctx);
  const double scale = 1.0 / static_cast<double>(frames.size());
  PriorGradient pg = zero_prior_gradient(ctx);
  ModelParams local = grad != nullptr ? params.zeros_like() : ModelParams{};
  LossTerms total;
  const Vector none;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const LossTerms t = video_loss_impl(frames[k], params, prior, ctx, settings,
                                        eps.empty() ? none : eps[k],
                                        grad != nullptr ? &local : nullptr, &pg);
    total.loss += scale * t.loss;
    total.recon += scale * t.recon;
    total.kl += scale * t.kl;
    total.l1 = t.l1;
  }
  if (grad != nullptr) {
    pg.mean *= scale;
    pg.cov *= scale;
    auto dst = grad->tensors();
    auto src = local.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].second += scale * *src[i].second;
    prior_backward(prior, pg, settings.lambda, *grad);
  }
  return total;
}

PosteriorSummary infer_posterior(const Matrix& frames, const ModelParams& params,
                                 const SegpPrior& prior, const ModelContext& ctx,
                                 double variance_override) {
  PosteriorSummary out;
  out.prior = prior.gaussian();
  out.encoded = encode_sequence(frames, ctx.grid, params);
  if (variance_override > 0.0) out.encoded.variance.setConstant(variance_override);
  out.posterior = variational_posterior(out.encoded, out.prior);
  return out;
}

}  // namespace segp
