#include <benchmark/benchmark.h>

#include "svi/scenario_bounds.hpp"

namespace {

void BM_CertifySingle(benchmark::State& state) {
  const long n = state.range(0);
  const long k = n / 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(svi::scenario_bounds::certify(k, n, 1e-6));
  }
}
BENCHMARK(BM_CertifySingle)->Arg(100)->Arg(500)->Arg(2000);

void BM_EpsilonTable(benchmark::State& state) {
  const long n = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(svi::scenario_bounds::epsilon_table(n, 1e-6));
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_EpsilonTable)->Arg(50)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
