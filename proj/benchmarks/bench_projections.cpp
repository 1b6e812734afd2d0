#include <benchmark/benchmark.h>

#include "svi/convex_sets.hpp"
#include "svi/rng.hpp"
#include "svi/types.hpp"

namespace {

using svi::Vector;

// Projection onto an intersection of random halfspaces through the origin —
// an all-affine block, handled by the dual active-set path.
void BM_PolyhedralProjection(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const long rows = state.range(1);
  svi::Philox gen(7, 0);
  svi::convex_sets::ConvexSet set(dim);
  for (long r = 0; r < rows; ++r) {
    Vector a(dim);
    for (int i = 0; i < dim; ++i) a[i] = gen.uniform(-1.0, 1.0);
    a /= a.norm();
    set.add_halfspace(a, gen.uniform(0.05, 0.5));
  }
  Vector probe(dim);
  for (int i = 0; i < dim; ++i) probe[i] = gen.uniform(-2.0, 2.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(set.project(probe));
  }
}
BENCHMARK(BM_PolyhedralProjection)->Args({4, 8})->Args({12, 30})->Args({24, 60});

// Unit ball (a quadratic constraint) plus halfspaces: a mixed block that runs
// through the alternating projection fallback.
void BM_MixedProjection(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  svi::Philox gen(9, 0);
  svi::convex_sets::ConvexSet set(dim);
  set.add_quadratic(2.0 * svi::Matrix::Identity(dim, dim), Vector::Zero(dim), 1.0);
  for (int r = 0; r < 6; ++r) {
    Vector a(dim);
    for (int i = 0; i < dim; ++i) a[i] = gen.uniform(-1.0, 1.0);
    a /= a.norm();
    set.add_halfspace(a, gen.uniform(0.1, 0.8));
  }
  Vector probe = Vector::Constant(dim, 1.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(set.project(probe));
  }
}
BENCHMARK(BM_MixedProjection)->Arg(4)->Arg(16);

}  // namespace
