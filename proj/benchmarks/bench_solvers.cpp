#include <benchmark/benchmark.h>

#include <vector>

#include "svi/demand_response.hpp"
#include "svi/games.hpp"
#include "svi/piecewise_qp.hpp"
#include "svi/rng.hpp"
#include "svi/types.hpp"
#include "svi/vi_solver.hpp"

namespace {

using svi::Matrix;
using svi::Vector;

// Strongly monotone affine problem with declared constants: the projected
// fixed-point scheme with step alpha / L^2.
void BM_AffineVI(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  svi::Philox gen(11, 0);
  Matrix B(dim, dim), R(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      B(i, j) = gen.uniform(-0.5, 0.5);
      R(i, j) = gen.uniform(-0.5, 0.5);
    }
  }
  const Matrix K = Matrix::Identity(dim, dim) + (0.3 / dim) * B.transpose() * B +
                   0.2 * (R - R.transpose());
  Vector m(dim);
  for (int i = 0; i < dim; ++i) m[i] = gen.uniform(-2.0, 2.0);

  svi::vi::OperatorOracle op;
  op.dim = dim;
  op.eval = [K, m](const Vector& x) { return Vector(K * x + m); };
  const Matrix sym = 0.5 * (K + K.transpose());
  op.strong_monotonicity = sym.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff();
  op.lipschitz = K.jacobiSvd().singularValues().maxCoeff();

  svi::convex_sets::ConvexSet set(dim);
  set.add_box(Vector::Constant(dim, -1.0), Vector::Constant(dim, 1.0));

  svi::vi::SolverParams params;
  params.tol = 1e-9;
  for (auto _ : state) {
    benchmark::DoNotOptimize(svi::vi::solve_vi(op, set, params));
  }
}
BENCHMARK(BM_AffineVI)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

// One exact best response: quadratic cost plus a pointwise maximum over
// sampled affine pieces, constrained to a box and one budget equality.
void BM_PiecewiseQP(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const long pieces = state.range(1);
  svi::Philox gen(13, 0);

  svi::qp::PiecewiseQP problem;
  problem.D = 2.0 * Matrix::Identity(dim, dim);
  problem.c = Vector::Zero(dim);
  problem.A = Matrix::Zero(2 * dim, dim);
  problem.b = Vector::Zero(2 * dim);
  for (int i = 0; i < dim; ++i) {
    problem.A(i, i) = 1.0;
    problem.b[i] = 1.0;
    problem.A(dim + i, i) = -1.0;
    problem.b[dim + i] = 0.0;
  }
  problem.E = Matrix::Ones(1, dim);
  problem.f = Vector::Constant(1, dim * 0.4);
  problem.piece_a = Matrix(pieces, dim);
  problem.piece_b = Vector(pieces);
  for (long p = 0; p < pieces; ++p) {
    for (int i = 0; i < dim; ++i) problem.piece_a(p, i) = gen.uniform(-1.0, 1.0);
    problem.piece_b[p] = gen.uniform(-0.5, 0.5);
  }
  const Vector x0 = Vector::Constant(dim, 0.4);

  for (auto _ : state) {
    benchmark::DoNotOptimize(svi::qp::solve_piecewise_qp(problem, x0));
  }
}
BENCHMARK(BM_PiecewiseQP)->Args({12, 30})->Args({24, 100})->Unit(benchmark::kMicrosecond);

// Full robust-equilibrium solve of a small consumption game.
void BM_RobustEquilibrium(benchmark::State& state) {
  const long agents = state.range(0);
  const long horizon = 12;
  const long n_samples = state.range(1);

  Vector mu(horizon);
  Matrix Sigma(horizon, horizon);
  for (long t = 0; t < horizon; ++t) {
    mu[t] = 4.0 + 1.5 * std::sin(2.0 * M_PI * static_cast<double>(t) / horizon);
    for (long u = 0; u < horizon; ++u) {
      Sigma(t, u) = 0.09 * std::pow(0.6, std::abs(static_cast<double>(t - u)));
    }
  }
  const auto samples = svi::dr::sample_profiles({mu, Sigma, 0.0}, n_samples, 21);

  svi::dr::DRGameConfig config;
  config.agents = agents;
  config.horizon = horizon;
  config.alpha = Vector::Ones(horizon);
  config.beta_price = Vector::Ones(horizon);
  config.cap = Vector::Ones(horizon);
  config.energy = Vector::Constant(agents, 2.5);
  const auto game = svi::dr::build_dr_game(config);

  for (auto _ : state) {
    benchmark::DoNotOptimize(svi::games::solve_sampled_robust_eq(game, samples));
  }
}
BENCHMARK(BM_RobustEquilibrium)->Args({3, 30})->Args({5, 50})->Unit(benchmark::kMillisecond);

}  // namespace
