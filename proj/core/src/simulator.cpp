#include "segp/simulator.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "segp/dataset_io.hpp"

namespace segp {

namespace {

int checked_ratio(double num, double den, const char* what) {
  const double ratio = num / den;
  const double k = std::round(ratio);
  if (std::abs(ratio - k) > 1e-9 * std::max(1.0, std::abs(ratio))) {
    std::ostringstream msg;
    msg << what << ": " << num << " is not an integer multiple of " << den;
    throw std::invalid_argument(msg.str());
  }
  return static_cast<int>(k);
}

}  // namespace

void DatasetConfig::validate() const {
  if (!(euler_step > 0.0) || !(sample_period > 0.0) || !(horizon > 0.0)) {
    throw std::invalid_argument("dataset: horizon, euler_step and sample_period must be positive");
  }
  if (steps_per_sample() < 1) throw std::invalid_argument("dataset: sample_period < euler_step");
  (void)fine_count();
  if (frames < 1) throw std::invalid_argument("dataset: frames must be >= 1");
  if ((frames - 1) * sample_period > horizon + 1e-9) {
    throw std::invalid_argument("dataset: (frames - 1) * sample_period exceeds horizon");
  }
  if (ball_radius < 0 || canvas < 2 * ball_radius + 1) {
    throw std::invalid_argument("dataset: canvas must be at least 2 * ball_radius + 1");
  }
  if (!(world_halfwidth > 0.0)) throw std::invalid_argument("dataset: world_halfwidth must be > 0");
  if (!(noise_var >= 0.0) || !(sigma_x0 >= 0.0)) {
    throw std::invalid_argument("dataset: noise_var and sigma_x0 must be non-negative");
  }
  if (!(input_variance >= 0.0) || !(input_lengthscale > 0.0)) {
    throw std::invalid_argument("dataset: need input_variance >= 0 and input_lengthscale > 0");
  }
  if (count < 0) throw std::invalid_argument("dataset: count must be non-negative");
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || c.cols() != n || d.rows() != c.rows() ||
      d.cols() != b.cols() || p.rows() != n || p.cols() != n || m_x0.size() != n) {
    throw std::invalid_argument("dataset: system matrix shapes are inconsistent");
  }
  if (b.cols() < 1) throw std::invalid_argument("dataset: at least one input channel required");
  if (c.rows() < 2) throw std::invalid_argument("dataset: rendering needs outputs (radius, angle)");
}

int DatasetConfig::steps_per_sample() const {
  return checked_ratio(sample_period, euler_step, "sample_period");
}

int DatasetConfig::fine_count() const {
  return checked_ratio(horizon, euler_step, "horizon") + 1;
}

TimeGrid DatasetConfig::grid() const { return TimeGrid::uniform(frames, sample_period); }

TimeGrid DatasetConfig::fine_grid() const { return TimeGrid::uniform(fine_count(), euler_step); }

LtiSystem DatasetConfig::system() const {
  LtiSystem sys{a, b, c, d, p, m_x0,
                sigma_x0 * sigma_x0 * Matrix::Identity(a.rows(), a.rows())};
  sys.validate_shapes();
  return sys;
}

InputGp DatasetConfig::input() const {
  if (b.cols() == 1) return InputGp::linear_mean_se(input_slope, input_variance, input_lengthscale);
  const auto q = b.cols();
  return InputGp::independent_se(Vector::Constant(q, input_slope), Vector::Zero(q),
                                 Vector::Constant(q, input_variance),
                                 Vector::Constant(q, input_lengthscale));
}

GpSampler::GpSampler(const InputGp& u, const TimeGrid& fine_grid) {
  const int m = fine_grid.size();
  const int p = u.dim;
  const Eigen::Index size = static_cast<Eigen::Index>(p) * m;
  mean_ = Vector::Zero(size);
  Matrix gram = Matrix::Zero(size, size);
  for (int k = 0; k < m; ++k) {
    const Vector mk = u.mean_fn(fine_grid[k]);
    for (int c = 0; c < p; ++c) mean_(c * m + k) = mk(c);
    for (int l = 0; l <= k; ++l) {
      const Matrix kk = u.cov_fn(fine_grid[k], fine_grid[l]);
      for (int c = 0; c < p; ++c) {
        for (int c2 = 0; c2 < p; ++c2) {
          gram(c * m + k, c2 * m + l) = kk(c, c2);
          gram(c2 * m + l, c * m + k) = kk(c, c2);
        }
      }
    }
  }
  lower_ = jittered_cholesky(gram).lower;
}

Vector GpSampler::draw(Rng& rng) const {
  const Vector z = rng.normal_vector(mean_.size());
  return mean_ + lower_.triangularView<Eigen::Lower>() * z;
}

Vector sample_gp_trajectory(const InputGp& u, const TimeGrid& fine_grid, std::uint64_t seed) {
  Rng rng(seed);
  return GpSampler(u, fine_grid).draw(rng);
}

Matrix euler_integrate(const LtiSystem& sys, const Vector& inputs, const Vector& x0, double dt,
                       int substeps) {
  const Eigen::Index n = sys.state_dim();
  const Eigen::Index p = sys.input_dim();
  if (x0.size() != n) throw std::invalid_argument("euler_integrate: x0 has wrong size");
  if (p < 1 || inputs.size() % p != 0) {
    throw std::invalid_argument("euler_integrate: inputs do not match the input dimension");
  }
  if (substeps < 1) throw std::invalid_argument("euler_integrate: substeps must be >= 1");
  const Eigen::Index m = inputs.size() / p;
  Matrix states(n, std::max<Eigen::Index>(m, 1));
  Vector x = x0;
  states.col(0) = x;
  const double h = dt / substeps;
  Vector uk(p);
  Vector uk1(p);
  for (Eigen::Index k = 0; k + 1 < m; ++k) {
    for (Eigen::Index c = 0; c < p; ++c) {
      uk(c) = inputs(c * m + k);
      uk1(c) = inputs(c * m + k + 1);
    }
    for (int j = 0; j < substeps; ++j) {
      const double w = static_cast<double>(j) / substeps;
      const Vector u = (1.0 - w) * uk + w * uk1;
      x += h * (sys.a * x + sys.b * u);
    }
    states.col(k + 1) = x;
  }
  return states;
}

LatentTrajectory make_observations(const Matrix& fine_states, const Vector& fine_inputs,
                                   const LtiSystem& sys, const DatasetConfig& cfg, Rng& rng) {
  const int step = cfg.steps_per_sample();
  const Eigen::Index m_fine = fine_states.cols();
  const Eigen::Index p = sys.input_dim();
  if (static_cast<Eigen::Index>(cfg.frames - 1) * step >= m_fine) {
    throw std::invalid_argument("make_observations: not enough fine-grid states");
  }
  const double sd = std::sqrt(cfg.noise_var);
  LatentTrajectory out;
  out.grid = cfg.grid();
  out.states.resize(cfg.frames, sys.output_dim());
  out.input = fine_inputs;
  Vector u(p);
  for (int i = 0; i < cfg.frames; ++i) {
    const Eigen::Index k = static_cast<Eigen::Index>(i) * step;
    for (Eigen::Index c = 0; c < p; ++c) u(c) = fine_inputs(c * m_fine + k);
    Vector y = sys.c * fine_states.col(k) + sys.d * u;
    for (Eigen::Index j = 0; j < y.size(); ++j) y(j) += sd * rng.normal();
    out.states.row(i) = y.transpose();
  }
  return out;
}

std::vector<std::uint8_t> render_frame(double radius, double angle, const DatasetConfig& cfg) {
  const int d = cfg.canvas;
  const double r = std::max(radius, 0.0);
  const double scale = (d - 1) / (2.0 * cfg.world_halfwidth);
  const double px = (r * std::cos(angle) + cfg.world_halfwidth) * scale;
  const double py = (r * std::sin(angle) + cfg.world_halfwidth) * scale;
  std::vector<std::uint8_t> frame(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0);
  if (!std::isfinite(px) || !std::isfinite(py)) return frame;
  const long col = std::lround(px);
  const long row = std::lround(py);
  const int br = cfg.ball_radius;
  for (int di = -br; di <= br; ++di) {
    for (int dj = -br; dj <= br; ++dj) {
      if (di * di + dj * dj > br * br) continue;
      const long rr = row + di;
      const long cc = col + dj;
      if (rr < 0 || rr >= d || cc < 0 || cc >= d) continue;
      frame[static_cast<std::size_t>(rr * d + cc)] = 1;
    }
  }
  return frame;
}

Matrix VideoSequence::as_matrix() const {
  const Eigen::Index n = static_cast<Eigen::Index>(canvas) * canvas;
  Matrix out(n, frames());
  for (int i = 0; i < frames(); ++i) {
    const auto f = frame(i);
    for (Eigen::Index q = 0; q < n; ++q) out(q, i) = f[static_cast<std::size_t>(q)];
  }
  return out;
}

VideoSequence render_video(const LatentTrajectory& latent, const DatasetConfig& cfg) {
  VideoSequence v;
  v.canvas = cfg.canvas;
  v.grid = latent.grid;
  v.pixels.reserve(static_cast<std::size_t>(latent.states.rows()) * cfg.canvas * cfg.canvas);
  for (Eigen::Index i = 0; i < latent.states.rows(); ++i) {
    const auto f = render_frame(latent.states(i, 0), latent.states(i, 1), cfg);
    v.pixels.insert(v.pixels.end(), f.begin(), f.end());
  }
  return v;
}

VideoSequence Dataset::video(int k) const {
  if (k < 0 || k >= count) throw std::out_of_range("Dataset::video: index out of range");
  VideoSequence v;
  v.canvas = config.canvas;
  v.grid = config.grid();
  const std::size_t per = static_cast<std::size_t>(config.frames) * config.canvas * config.canvas;
  const auto first = frames.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(k));
  v.pixels.assign(first, first + static_cast<std::ptrdiff_t>(per));
  return v;
}

Matrix Dataset::frame_matrix(int k) const {
  if (k < 0 || k >= count) throw std::out_of_range("Dataset::frame_matrix: index out of range");
  const Eigen::Index pixels = static_cast<Eigen::Index>(config.canvas) * config.canvas;
  Matrix out(pixels, config.frames);
  const std::uint8_t* src =
      frames.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(pixels * config.frames);
  for (Eigen::Index i = 0; i < config.frames; ++i) {
    for (Eigen::Index q = 0; q < pixels; ++q) out(q, i) = src[i * pixels + q];
  }
  return out;
}

Dataset simulate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const LtiSystem sys = cfg.system();
  const TimeGrid fine = cfg.fine_grid();
  const GpSampler sampler(cfg.input(), fine);
  const int n_out = cfg.latent_dim();
  const int big_n = cfg.frames;

  Dataset ds;
  ds.config = cfg;
  ds.config.seed = seed;
  ds.seed = seed;
  ds.count = cfg.count;
  ds.latents.resize(static_cast<Eigen::Index>(n_out) * big_n, cfg.count);
  ds.inputs.resize(sampler.size(), cfg.count);
  ds.frames.reserve(static_cast<std::size_t>(cfg.count) * big_n * cfg.canvas * cfg.canvas);

  for (int k = 0; k < cfg.count; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    Vector x0 = cfg.m_x0;
    for (Eigen::Index j = 0; j < x0.size(); ++j) x0(j) += cfg.sigma_x0 * rng.normal();
    const Vector u = sampler.draw(rng);
    const Matrix states = euler_integrate(sys, u, x0, cfg.euler_step);
    const LatentTrajectory obs = make_observations(states, u, sys, cfg, rng);
    for (int j = 0; j < n_out; ++j) {
      for (int i = 0; i < big_n; ++i) ds.latents(j * big_n + i, k) = obs.states(i, j);
    }
    ds.inputs.col(k) = u;
    const VideoSequence v = render_video(obs, cfg);
    ds.frames.insert(ds.frames.end(), v.pixels.begin(), v.pixels.end());
  }
  return ds;
}

Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                         const std::filesystem::path& out_dir) {
  Dataset ds = simulate_dataset(cfg, seed);
  write_dataset(ds, out_dir);
  return ds;
}

}  // namespace segp
