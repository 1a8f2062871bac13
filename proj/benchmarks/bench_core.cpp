#include <benchmark/benchmark.h>

#include "pixelflow/backbone.hpp"
#include "pixelflow/dataset.hpp"
#include "pixelflow/ops.hpp"
#include "pixelflow/training.hpp"

using namespace pixelflow;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.counters["flops"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

RunConfig desk_like(std::size_t hidden) {
  RunConfig cfg;
  cfg.model.hidden_dim = hidden;
  cfg.model.depth = 6;
  cfg.model.heads = 4;
  cfg.model.num_classes = 8;
  cfg.model.max_resolution = 32;
  cfg.model.mlp_ratio = 4;
  cfg.model.frequency_dim = 256;
  return cfg;
}

void BM_TrainStep(benchmark::State& state) {
  const auto cfg = desk_like(static_cast<std::size_t>(state.range(0)));
  Trainer trainer(cfg, gen_shapes_dataset(8, 32, 8, 0));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().loss);
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
