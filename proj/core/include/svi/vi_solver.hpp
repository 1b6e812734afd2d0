#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "svi/convex_sets.hpp"
#include "svi/types.hpp"

namespace svi::vi {

// Single- or set-valued monotone operator. `eval` is the single-valued map
// F(x); when F is set-valued (pointwise maxima of smooth costs), supply
// `subgradient_eval` returning one element of the subdifferential instead.
// Declared constants unlock faster iterations: strong_monotonicity is the
// alpha of (F(x)-F(y))'(x-y) >= alpha |x-y|^2, lipschitz the L of
// |F(x)-F(y)| <= L |x-y|. lipschitz == 0 declares a constant operator.
struct OperatorOracle {
  int dim = 0;
  std::function<Vector(const Vector&)> eval;
  std::function<Vector(const Vector&)> subgradient_eval;
  double strong_monotonicity = 0.0;  // 0 = undeclared
  double lipschitz = -1.0;           // < 0 = undeclared; 0 = constant operator

  bool smooth() const { return static_cast<bool>(eval); }
  // Whichever evaluation is available (eval preferred).
  Vector apply(const Vector& x) const;
};

enum class Mode { vi, qvi };

struct SolverParams {
  double tol = 1e-7;              // natural-residual target, smooth operators
  double subgradient_tol = 1e-5;  // looser target for set-valued operators
  long max_iterations = 1'000'000;
  convex_sets::ProjectionControls projection{};
  Vector start;  // empty: project the origin onto the feasible set

  // Anchored fixed-point controls for quasi-variational problems.
  double qvi_damping = 0.5;
  long qvi_max_outer = 500;
  double qvi_tol = 1e-9;            // fixed-point gap target
  bool qvi_compute_residual = true; // natural residual at the final anchor (one projection)
};

struct Solution {
  Vector x;
  double natural_residual = std::numeric_limits<double>::infinity();
  long iterations = 0;
  double feasibility_violation = std::numeric_limits<double>::infinity();
  bool converged = false;
};

// A sampled problem: one operator, scenario-independent base constraints, and
// one constraint set per scenario — fixed sets for plain problems, anchor
// parametrized builders for quasi-variational ones. Leave-one-out analyses
// deactivate scenarios through the `active` masks accepted by the solvers.
struct ScenarioVIProblem {
  OperatorOracle op;
  convex_sets::ConvexSet base;                    // may be default (unconstrained)
  std::vector<convex_sets::ConvexSet> scenarios;  // plain mode
  std::vector<std::function<convex_sets::ConvexSet(const Vector&)>> scenario_maps;  // qvi mode
  Mode mode = Mode::vi;

  // Optional fast inner map for the anchored fixed point: given the anchor
  // and a per-scenario activity mask, returns the exact inner solution.
  // Game front-ends install this when per-agent structure allows closed-ish
  // inner solves; absent, the inner problem runs through solve_vi.
  std::function<Vector(const Vector&, const std::vector<char>&)> best_response;

  int dim() const { return op.dim; }
  std::size_t scenario_count() const {
    return mode == Mode::vi ? scenarios.size() : scenario_maps.size();
  }
  // Base plus every active scenario set (plain mode).
  convex_sets::ConvexSet feasible_set(const std::vector<char>* active = nullptr) const;
  // Base plus every active scenario set built at `anchor` (qvi mode); in
  // plain mode this ignores the anchor and equals feasible_set.
  convex_sets::ConvexSet set_at(const Vector& anchor,
                                const std::vector<char>* active = nullptr) const;
};

// |x - P_X(x - gamma F(x))| / gamma over an explicit set.
double natural_residual(const OperatorOracle& op, const convex_sets::ConvexSet& set,
                        const Vector& x, double gamma,
                        const convex_sets::ProjectionControls& pc = {});

// Same merit over a problem's feasible set (set_at(x) in qvi mode).
double natural_residual(const ScenarioVIProblem& problem, const Vector& x, double gamma,
                        const convex_sets::ProjectionControls& pc = {});

// Solves F(x*)'(x − x*) >= 0 for all x in `set`. Scheme dispatch:
// declared (alpha, L) — projected fixed point with step alpha/L^2;
// constant operator (L == 0) — growing-step proximal iteration;
// smooth otherwise — extragradient with adaptive step;
// subgradient-only — projected subgradient with steps c/k, c = 1/alpha.
Solution solve_vi(const OperatorOracle& op, const convex_sets::ConvexSet& set,
                  const SolverParams& params = {});

// Plain-mode entry point over the problem's feasible set.
Solution solve_vi(const ScenarioVIProblem& problem, const SolverParams& params = {},
                  const std::vector<char>* active = nullptr);

// Anchored damped fixed point for quasi-variational problems: repeatedly
// solve the inner problem over set_at(anchor) (or call best_response) and
// damp the anchor toward the inner solution until the gap closes.
Solution solve_qvi(const ScenarioVIProblem& problem, const SolverParams& params = {},
                   const std::vector<char>* active = nullptr);

// Mode dispatch: solve_vi or solve_qvi.
Solution solve(const ScenarioVIProblem& problem, const SolverParams& params = {},
               const std::vector<char>* active = nullptr);

// Diagnostic lower bound on the strong-monotonicity modulus: the minimum of
// (F(x)-F(y))'(x-y)/|x-y|^2 over sampled pairs from `sampler`. Throws
// Error("degenerate-pairs") when every sampled pair coincides.
double estimate_strong_monotonicity(const OperatorOracle& op,
                                    const std::function<Vector()>& sampler, int pairs);

}  // namespace svi::vi
