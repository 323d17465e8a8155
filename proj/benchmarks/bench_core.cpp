#include <benchmark/benchmark.h>

#include "dinomc/diagnostics.hpp"
#include "dinomc/diffusion_reaction.hpp"
#include "dinomc/mlp.hpp"
#include "dinomc/prior.hpp"

using namespace dinomc;

static void BM_PriorSample(benchmark::State& state) {
  auto prior = make_prior(static_cast<int>(state.range(0)), 0.03, 3.33);
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(prior->sample(rng));
}
BENCHMARK(BM_PriorSample)->Unit(benchmark::kMicrosecond)->Arg(16)->Arg(32)->Arg(64);

static void BM_ForwardSolve(benchmark::State& state) {
  auto prior = make_prior(static_cast<int>(state.range(0)), 0.03, 3.33);
  DiffusionReactionModel model(prior, random_observation_points(25, 7));
  Rng rng(2);
  const Vector m = prior->sample(rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.evaluate(m));
}
BENCHMARK(BM_ForwardSolve)->Unit(benchmark::kMicrosecond)->Arg(16)->Arg(32);

// Observable plus full Jacobian for the default 50 -> 100^3 -> 25 network.
static void BM_MlpJacobian(benchmark::State& state) {
  const Mlp net({50, 100, 100, 100, 25}, 3);
  const Vector x = Vector::LinSpaced(50, -1.0, 1.0);
  Vector value;
  Matrix jac;
  for (auto _ : state) {
    net.forward_jacobian(x, value, jac);
    benchmark::DoNotOptimize(jac.data());
  }
}
BENCHMARK(BM_MlpJacobian)->Unit(benchmark::kMicrosecond);

static void BM_EssPercent(benchmark::State& state) {
  Rng rng(4);
  std::vector<Matrix> pool;
  for (int c = 0; c < 4; ++c) pool.push_back(standard_normal(rng, 256 * state.range(0)).reshaped(256, state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ess_percent(pool));
}
BENCHMARK(BM_EssPercent)->Unit(benchmark::kMillisecond)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
