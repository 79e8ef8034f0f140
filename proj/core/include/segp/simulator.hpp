#ifndef SEGP_SIMULATOR_HPP
#define SEGP_SIMULATOR_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "segp/linalg.hpp"
#include "segp/rng.hpp"
#include "segp/segp_prior.hpp"
#include "segp/stable_lti.hpp"

namespace segp {

/// Spiralling-particle data recipe. Defaults are the case-study values:
/// x = [radius, angle], A = diag(-0.6, 0), B = [0, 1]^T, C = I, D = 0.
struct DatasetConfig {
  double horizon = 3.0;
  double euler_step = 1e-2;
  double sample_period = 0.12;
  int frames = 25;
  double noise_var = 1e-3;
  int canvas = 40;
  int ball_radius = 2;
  double world_halfwidth = 2.0;
  Vector m_x0 = (Vector(2) << 1.5, 0.0).finished();
  double sigma_x0 = 0.2;
  double input_slope = 0.4 * 3.14159265358979323846;
  double input_variance = 1.0;
  double input_lengthscale = 1.0;
  int count = 2000;
  std::uint64_t seed = 0;

  Matrix a = (Matrix(2, 2) << -0.6, 0.0, 0.0, 0.0).finished();
  Matrix b = (Matrix(2, 1) << 0.0, 1.0).finished();
  Matrix c = Matrix::Identity(2, 2);
  Matrix d = Matrix::Zero(2, 1);
  Matrix p = Matrix::Identity(2, 2);

  /// Throws std::invalid_argument on violated invariants.
  void validate() const;

  int steps_per_sample() const;  // sample_period / euler_step
  int fine_count() const;        // points on [0, horizon] including both ends
  TimeGrid grid() const;         // 0, T_s, ..., (frames-1) T_s
  TimeGrid fine_grid() const;
  LtiSystem system() const;
  InputGp input() const;
  int latent_dim() const { return static_cast<int>(c.rows()); }
  int input_dim() const { return static_cast<int>(b.cols()); }
};

/// Draws from an input GP on a fixed fine grid via the Cholesky factor of
/// its Gram matrix (shared jitter ladder).
class GpSampler {
 public:
  GpSampler(const InputGp& u, const TimeGrid& fine_grid);

  /// p*M values, channel-major.
  Vector draw(Rng& rng) const;
  Eigen::Index size() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix lower_;
};

Vector sample_gp_trajectory(const InputGp& u, const TimeGrid& fine_grid, std::uint64_t seed);

/// Forward Euler on the fine grid, x_{k+1} = x_k + dt (A x_k + B u_k).
/// With substeps > 1 each interval is split and the input is interpolated
/// linearly between fine nodes; substeps = 1 is the plain scheme.
/// `inputs` is channel-major (p*M); returns n x M states.
Matrix euler_integrate(const LtiSystem& sys, const Vector& inputs, const Vector& x0, double dt,
                       int substeps = 1);

struct LatentTrajectory {
  TimeGrid grid;
  Matrix states;  // N x m
  Vector input;   // fine-grid input, channel-major
};

/// y = C x + D u at every steps_per_sample-th fine point, plus N(0, noise_var I).
LatentTrajectory make_observations(const Matrix& fine_states, const Vector& fine_inputs,
                                   const LtiSystem& sys, const DatasetConfig& cfg, Rng& rng);

/// d x d binary frame, row-major. World [-R, R]^2 maps affinely onto pixel
/// centres [0, d-1]^2 (column follows x, row follows y); the particle position
/// is rounded to the nearest pixel and every pixel within ball_radius of it
/// (Euclidean, inclusive) is lit.
std::vector<std::uint8_t> render_frame(double radius, double angle, const DatasetConfig& cfg);

struct VideoSequence {
  int canvas = 0;
  TimeGrid grid;
  std::vector<std::uint8_t> pixels;  // frame-major, row-major

  int frames() const { return grid.size(); }
  std::span<const std::uint8_t> frame(int i) const {
    const auto n = static_cast<std::size_t>(canvas) * static_cast<std::size_t>(canvas);
    return {pixels.data() + n * static_cast<std::size_t>(i), n};
  }
  /// d^2 x N matrix of 0/1 doubles.
  Matrix as_matrix() const;
};

VideoSequence render_video(const LatentTrajectory& latent, const DatasetConfig& cfg);

/// Generated or loaded dataset held in memory.
struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  int count = 0;
  Matrix latents;  // (m N) x count, dimension-major per column
  Matrix inputs;   // (p M) x count
  std::vector<std::uint8_t> frames;  // count x N x d x d

  VideoSequence video(int k) const;
  /// Frames of video k as a d^2 x N matrix of 0/1 doubles.
  Matrix frame_matrix(int k) const;
  Vector latent(int k) const { return latents.col(k); }
};

/// Simulates `cfg.count` videos. Trajectory k draws from Rng::stream(seed, k):
/// initial state, then fine-grid input, then measurement noise.
Dataset simulate_dataset(const DatasetConfig& cfg, std::uint64_t seed);

/// simulate_dataset + write_dataset.
Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

}  // namespace segp

#endif  // SEGP_SIMULATOR_HPP
