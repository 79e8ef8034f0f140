#include <benchmark/benchmark.h>

#include <vector>

#include "segp/rng.hpp"
#include "segp/segp_prior.hpp"
#include "segp/simulator.hpp"
#include "segp/stable_lti.hpp"
#include "segp/train.hpp"
#include "segp/vae.hpp"

namespace {

using namespace segp;

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_MatrixExp(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Matrix a = normal_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matrix_exp(a, 0.7));
}
BENCHMARK(BM_MatrixExp)->Arg(2)->Arg(5)->Arg(16);

void BM_MatrixExpFrechet(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Matrix a = normal_matrix(n, n, rng);
  const Matrix e = normal_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matrix_exp_frechet(a, e));
}
BENCHMARK(BM_MatrixExpFrechet)->Arg(2)->Arg(5);

// Default 25-frame grid, 2 outputs.
void BM_AssemblePrior(benchmark::State& state) {
  const DatasetConfig cfg;
  const LtiSystem sys = cfg.system();
  const InputGp u = cfg.input();
  const TimeGrid grid = cfg.grid();
  for (auto _ : state) benchmark::DoNotOptimize(assemble_prior(grid, sys, u, QuadratureConfig{}));
}
BENCHMARK(BM_AssemblePrior)->Unit(benchmark::kMillisecond);

void BM_PriorOperator(benchmark::State& state) {
  const DatasetConfig cfg;
  const LtiSystem sys = cfg.system();
  const TimeGrid grid = cfg.grid();
  const auto input =
      std::make_shared<const FineInput>(discretize_input(grid, cfg.input(), QuadratureConfig{}));
  for (auto _ : state) {
    PriorOperator op(grid, sys, input);
    benchmark::DoNotOptimize(op.cov().data());
  }
}
BENCHMARK(BM_PriorOperator)->Unit(benchmark::kMillisecond);

// One optimizer step's worth of work at default model size.
void BM_BatchLossAndGradient(benchmark::State& state) {
  DatasetConfig dc;
  dc.count = static_cast<int>(state.range(0));
  const Dataset data = simulate_dataset(dc, 3);
  const ModelShape shape;
  const TrainState st = init_params(shape, TrainConfig{}, 4);
  const ModelContext ctx = ModelContext::from_dataset(dc, QuadratureConfig{}, Vector::Ones(2));
  Rng rng(5);
  std::vector<Matrix> frames;
  std::vector<Vector> eps;
  for (int k = 0; k < dc.count; ++k) {
    frames.push_back(data.frame_matrix(k));
    eps.push_back(rng.normal_vector(2 * dc.frames));
  }
  for (auto _ : state) {
    ModelParams grad = st.params.zeros_like();
    benchmark::DoNotOptimize(batch_loss(frames, eps, st.params, ctx, LossSettings{}, &grad).loss);
  }
}
BENCHMARK(BM_BatchLossAndGradient)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
