#include <benchmark/benchmark.h>

#include "lion/deq.hpp"
#include "lion/prompt_model.hpp"
#include "lion/robust_opt.hpp"

namespace {

using namespace lion;

Tensor random_vector(std::size_t n, Rng& rng) {
  Tensor t({n});
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_SolveForward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const deq::DeqCell cell = deq::make_cell(h, h, rng);
  const Tensor x = random_vector(h, rng);
  deq::SolverConfig cfg;
  cfg.anderson_depth = static_cast<int>(state.range(1));
  int iters = 0;
  for (auto _ : state) {
    const deq::SolveReport r = deq::solve_forward(cell, x, cfg);
    iters = r.iterations;
    benchmark::DoNotOptimize(r.z_star.data().data());
  }
  state.counters["iterations"] = iters;
}
BENCHMARK(BM_SolveForward)->ArgsProduct({{8, 16, 64}, {0, 5}});

void BM_DeqVjp(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const deq::DeqCell cell = deq::make_cell(h, h, rng);
  const Tensor x = random_vector(h, rng), y = random_vector(h, rng);
  const deq::SolverConfig cfg;
  const Tensor zs = deq::solve_forward(cell, x, cfg).z_star;
  for (auto _ : state) benchmark::DoNotOptimize(deq::deq_vjp(cell, zs, x, y, cfg).grad_x.data().data());
}
BENCHMARK(BM_DeqVjp)->Arg(8)->Arg(16)->Arg(64);

PromptModel desk_model() {
  Rng rng(3);
  Rng bb = rng.split("bb");
  Rng init = rng.split("init");
  return PromptModel(Backbone::mlp(16, 512, 8, bb), 4, init);
}

void BM_ForwardFull(benchmark::State& state) {
  const PromptModel m = desk_model();
  Rng rng(4);
  const Tensor x = random_vector(16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward_full(x).data().data());
}
BENCHMARK(BM_ForwardFull);

void BM_LossAndGrad(benchmark::State& state) {
  PromptModel m = desk_model();
  Rng rng(5);
  Dataset ds;
  ds.inputs = Tensor({32, 16});
  for (double& v : ds.inputs.data()) v = rng.uniform(-1.0, 1.0);
  ds.num_classes = 4;
  for (std::size_t i = 0; i < 32; ++i) ds.labels.push_back(i % 4);
  std::vector<std::size_t> batch(32);
  for (std::size_t i = 0; i < 32; ++i) batch[i] = i;
  for (auto _ : state) benchmark::DoNotOptimize(m.loss_and_grad(ds, batch));
}
BENCHMARK(BM_LossAndGrad);

void BM_Partition(benchmark::State& state) {
  Rng rng(6);
  std::vector<double> scores(static_cast<std::size_t>(state.range(0)));
  for (double& s : scores) s = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(robust::partition(scores, 0.4).threshold_value);
}
BENCHMARK(BM_Partition)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
