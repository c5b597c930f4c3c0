// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include "prefmo/metrics.hpp"
#include "prefmo/testbed.hpp"

namespace {

std::vector<prefmo::ObjectiveVector> random_front(int n, int m) {
  prefmo::Rng rng = prefmo::make_rng(7, {static_cast<std::uint64_t>(m)});
  std::vector<prefmo::ObjectiveVector> pts;
  for (int i = 0; i < n; ++i) {
    prefmo::ObjectiveVector y(m);
    for (int j = 0; j < m; ++j) y[j] = prefmo::uniform01(rng);
    pts.push_back(y);
  }
  return pts;
}

void BM_HypervolumeMcSerial(benchmark::State& state) {
  const auto pts = random_front(30, static_cast<int>(state.range(0)));
  const prefmo::ObjectiveVector ref = prefmo::ObjectiveVector::Zero(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(prefmo::hypervolume_mc_serial(pts, ref, 1 << 20, 1));
}

void BM_HypervolumeMcParallel(benchmark::State& state) {
  const auto pts = random_front(30, static_cast<int>(state.range(0)));
  const prefmo::ObjectiveVector ref = prefmo::ObjectiveVector::Zero(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(prefmo::hypervolume_mc(pts, ref, 1 << 20, 1));
}

void BM_EvaluateRowsSerial(benchmark::State& state) {
  const auto& p = prefmo::get_problem("car_side_impact");
  const auto x = prefmo::sample_uniform_designs(p.space, 100000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(prefmo::evaluate_rows_serial(p.evaluate, p.m, x));
}

void BM_EvaluateRowsParallel(benchmark::State& state) {
  const auto& p = prefmo::get_problem("car_side_impact");
  const auto x = prefmo::sample_uniform_designs(p.space, 100000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(prefmo::evaluate_rows(p.evaluate, p.m, x));
}

}  // namespace

BENCHMARK(BM_HypervolumeMcSerial)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HypervolumeMcParallel)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateRowsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateRowsParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
