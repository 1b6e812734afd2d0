#include "svi/vi_solver.hpp"

#include <algorithm>
#include <cmath>

#include "svi/errors.hpp"

namespace svi::vi {

namespace {

using convex_sets::ConvexSet;
using convex_sets::ProjectionControls;

Vector starting_point(const ConvexSet& set, const SolverParams& params) {
  if (params.start.size() > 0) {
    if (params.start.size() != set.dim() && set.dim() > 0) {
      throw DimensionMismatchError("start point has dimension " +
                                   std::to_string(params.start.size()) + ", set expects " +
                                   std::to_string(set.dim()));
    }
    return set.unconstrained() ? params.start : set.project(params.start);
  }
  Vector origin = Vector::Zero(set.dim());
  return set.unconstrained() ? origin : set.project(origin, {});
}

Solution finish(const ConvexSet& set, Vector x, double residual, long iterations, bool converged,
                const ProjectionControls& pc) {
  Solution sol;
  sol.x = std::move(x);
  sol.natural_residual = residual;
  sol.iterations = iterations;
  sol.feasibility_violation = set.violation(sol.x);
  sol.converged = converged && sol.feasibility_violation <= 10.0 * pc.tol;
  return sol;
}

// Constant operator: the problem is linear programming over the set. The
// proximal iteration x <- P(x - gamma c) with a growing step reaches a fixed
// point (which solves the problem exactly for any gamma > 0).
Solution solve_constant(const OperatorOracle& op, const ConvexSet& set,
                        const SolverParams& params) {
  const Vector c = op.eval(Vector::Zero(op.dim));
  Vector x = starting_point(set, params);
  double gamma = 1.0;
  long iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    Vector next = set.project(x - gamma * c, params.projection);
    const double move = (next - x).lpNorm<Eigen::Infinity>();
    x = std::move(next);
    if (move <= 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
    gamma = std::min(gamma * 2.0, 1e6);
  }
  const double residual = (x - set.project(x - c, params.projection)).norm();
  return finish(set, std::move(x), residual, iter + 1, residual <= params.tol,
                params.projection);
}

// Declared modulus and Lipschitz constant: projected fixed point with the
// optimal constant step alpha / L^2 contracts geometrically.
Solution solve_fixed_step(const OperatorOracle& op, const ConvexSet& set,
                          const SolverParams& params) {
  const double gamma = op.strong_monotonicity / (op.lipschitz * op.lipschitz);
  Vector x = starting_point(set, params);
  long iter = 0;
  double residual = std::numeric_limits<double>::infinity();
  for (; iter < params.max_iterations; ++iter) {
    Vector next = set.project(x - gamma * op.eval(x), params.projection);
    residual = (x - next).norm() / gamma;
    x = std::move(next);
    if (residual <= params.tol) break;
  }
  return finish(set, std::move(x), residual, std::min(iter + 1, params.max_iterations),
                residual <= params.tol, params.projection);
}

// Smooth operator without usable constants: extragradient with a step that
// halves whenever the local curvature test fails and creeps back up after
// successful steps.
Solution solve_extragradient(const OperatorOracle& op, const ConvexSet& set,
                             const SolverParams& params) {
  Vector x = starting_point(set, params);
  double gamma = 1.0;
  double residual = std::numeric_limits<double>::infinity();
  long iter = 0;
  while (iter < params.max_iterations) {
    const Vector fx = op.eval(x);
    Vector y = set.project(x - gamma * fx, params.projection);
    const Vector fy = op.eval(y);
    ++iter;
    const double dist = (x - y).norm();
    if (gamma * (fx - fy).norm() > 0.9 * dist && gamma > 1e-12) {
      gamma *= 0.5;
      continue;
    }
    residual = dist / gamma;
    x = set.project(x - gamma * fy, params.projection);
    gamma = std::min(gamma * 1.05, 1e6);
    if (residual <= params.tol) break;
  }
  return finish(set, std::move(x), residual, iter, residual <= params.tol, params.projection);
}

// Set-valued operator with a declared modulus: projected subgradient steps
// c/k with c = 1/alpha. The reported merit uses the oracle's own selection,
// so problems whose solution sits at a kink of the operator may keep a
// positive merit; callers needing exactness polish with a dedicated
// best-response pass.
Solution solve_subgradient(const OperatorOracle& op, const ConvexSet& set,
                           const SolverParams& params) {
  if (op.strong_monotonicity <= 0.0) {
    throw InvalidQueryError(
        "subgradient-only operators require a positive declared strong-monotonicity modulus");
  }
  const double c = 1.0 / op.strong_monotonicity;
  Vector x = starting_point(set, params);
  double residual = std::numeric_limits<double>::infinity();
  long iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    const Vector g = op.subgradient_eval(x);
    if (iter % 50 == 0) {
      residual = (x - set.project(x - c * g, params.projection)).norm() / c;
      if (residual <= params.subgradient_tol) break;
    }
    const double step = c / static_cast<double>(iter + 1);
    x = set.project(x - step * g, params.projection);
  }
  return finish(set, std::move(x), residual, std::min(iter + 1, params.max_iterations),
                residual <= params.subgradient_tol, params.projection);
}

}  // namespace

Vector OperatorOracle::apply(const Vector& x) const {
  if (eval) return eval(x);
  if (subgradient_eval) return subgradient_eval(x);
  throw InvalidQueryError("operator oracle has no evaluation function");
}

ConvexSet ScenarioVIProblem::feasible_set(const std::vector<char>* active) const {
  if (mode != Mode::vi) {
    throw InvalidQueryError(
        "anchor-dependent problems have no fixed feasible set; use set_at");
  }
  if (active && active->size() != scenarios.size()) {
    throw DimensionMismatchError("activity mask covers " + std::to_string(active->size()) +
                                 " scenarios, problem has " + std::to_string(scenarios.size()));
  }
  ConvexSet out(op.dim);
  out.absorb(base);
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (!active || (*active)[i]) out.absorb(scenarios[i]);
  }
  return out;
}

ConvexSet ScenarioVIProblem::set_at(const Vector& anchor, const std::vector<char>* active) const {
  if (mode == Mode::vi) return feasible_set(active);
  if (active && active->size() != scenario_maps.size()) {
    throw DimensionMismatchError("activity mask covers " + std::to_string(active->size()) +
                                 " scenarios, problem has " +
                                 std::to_string(scenario_maps.size()));
  }
  ConvexSet out(op.dim);
  out.absorb(base);
  for (std::size_t i = 0; i < scenario_maps.size(); ++i) {
    if (!active || (*active)[i]) out.absorb(scenario_maps[i](anchor));
  }
  return out;
}

double natural_residual(const OperatorOracle& op, const ConvexSet& set, const Vector& x,
                        double gamma, const ProjectionControls& pc) {
  if (!(gamma > 0.0)) throw InvalidQueryError("natural residual requires gamma > 0");
  if (x.size() != op.dim) {
    throw DimensionMismatchError("point has dimension " + std::to_string(x.size()) +
                                 ", operator expects " + std::to_string(op.dim));
  }
  return (x - set.project(x - gamma * op.apply(x), pc)).norm() / gamma;
}

double natural_residual(const ScenarioVIProblem& problem, const Vector& x, double gamma,
                        const ProjectionControls& pc) {
  return natural_residual(problem.op, problem.set_at(x), x, gamma, pc);
}

Solution solve_vi(const OperatorOracle& op, const ConvexSet& set, const SolverParams& params) {
  if (op.dim <= 0) throw InvalidQueryError("operator dimension must be positive");
  if (set.dim() > 0 && set.dim() != op.dim) {
    throw DimensionMismatchError("set dimension " + std::to_string(set.dim()) +
                                 " does not match operator dimension " + std::to_string(op.dim));
  }
  if (op.lipschitz >= 0.0 && op.strong_monotonicity > op.lipschitz) {
    throw InvalidQueryError("declared strong-monotonicity modulus exceeds Lipschitz constant");
  }
  if (op.eval) {
    if (op.lipschitz == 0.0) return solve_constant(op, set, params);
    if (op.strong_monotonicity > 0.0 && op.lipschitz > 0.0) {
      return solve_fixed_step(op, set, params);
    }
    return solve_extragradient(op, set, params);
  }
  if (op.subgradient_eval) return solve_subgradient(op, set, params);
  throw InvalidQueryError("operator oracle has no evaluation function");
}

Solution solve_vi(const ScenarioVIProblem& problem, const SolverParams& params,
                  const std::vector<char>* active) {
  return solve_vi(problem.op, problem.feasible_set(active), params);
}

Solution solve_qvi(const ScenarioVIProblem& problem, const SolverParams& params,
                   const std::vector<char>* active) {
  const std::size_t count = problem.scenario_count();
  if (active && active->size() != count) {
    throw DimensionMismatchError("activity mask covers " + std::to_string(active->size()) +
                                 " scenarios, problem has " + std::to_string(count));
  }
  const double theta = params.qvi_damping;
  if (!(theta > 0.0) || theta > 1.0) {
    throw InvalidQueryError("damping must lie in (0, 1]");
  }
  std::vector<char> mask;
  if (active) {
    mask = *active;
  } else {
    mask.assign(count, 1);
  }

  Vector y;
  if (params.start.size() > 0) {
    if (params.start.size() != problem.dim()) {
      throw DimensionMismatchError("start point has dimension " +
                                   std::to_string(params.start.size()) + ", problem expects " +
                                   std::to_string(problem.dim()));
    }
    y = params.start;
  } else {
    y = problem.base.unconstrained() ? Vector::Zero(problem.dim())
                                     : problem.base.project(Vector::Zero(problem.dim()),
                                                            params.projection);
  }

  SolverParams inner_params = params;
  inner_params.tol = std::min(params.tol, params.qvi_tol);

  double gap = std::numeric_limits<double>::infinity();
  long outer = 0;
  for (; outer < params.qvi_max_outer; ++outer) {
    Vector z;
    if (problem.best_response) {
      z = problem.best_response(y, mask);
    } else {
      inner_params.start = y;
      z = solve_vi(problem.op, problem.set_at(y, &mask), inner_params).x;
    }
    gap = (z - y).lpNorm<Eigen::Infinity>();
    y = (1.0 - theta) * y + theta * z;
    if (gap <= params.qvi_tol) {
      ++outer;
      break;
    }
  }

  Solution sol;
  sol.x = std::move(y);
  sol.iterations = outer;
  if (params.qvi_compute_residual) {
    // Land the anchor exactly in its own set, then report the true merit
    // there. Masked re-solve loops switch this off to save the projections
    // and read the fixed-point gap instead.
    ConvexSet at = problem.set_at(sol.x, &mask);
    sol.x = at.project(sol.x, params.projection);
    sol.feasibility_violation = at.violation(sol.x);
    sol.natural_residual =
        natural_residual(problem.op, at, sol.x, 1.0, params.projection);
  } else {
    sol.feasibility_violation = problem.set_at(sol.x, &mask).violation(sol.x);
    sol.natural_residual = gap;
  }
  sol.converged = gap <= params.qvi_tol;
  return sol;
}

Solution solve(const ScenarioVIProblem& problem, const SolverParams& params,
               const std::vector<char>* active) {
  return problem.mode == Mode::vi ? solve_vi(problem, params, active)
                                  : solve_qvi(problem, params, active);
}

double estimate_strong_monotonicity(const OperatorOracle& op,
                                    const std::function<Vector()>& sampler, int pairs) {
  if (pairs <= 0) throw InvalidQueryError("pair count must be positive");
  if (!sampler) throw InvalidQueryError("domain sampler is required");
  double best = std::numeric_limits<double>::infinity();
  int usable = 0;
  for (int p = 0; p < pairs; ++p) {
    const Vector x = sampler();
    const Vector y = sampler();
    if (x.size() != op.dim || y.size() != op.dim) {
      throw DimensionMismatchError("sampler returned a point of wrong dimension");
    }
    const double dd = (x - y).squaredNorm();
    if (dd <= 1e-28 * (1.0 + x.squaredNorm())) continue;
    ++usable;
    best = std::min(best, (op.apply(x) - op.apply(y)).dot(x - y) / dd);
  }
  if (usable == 0) {
    throw Error("degenerate-pairs", "every sampled pair coincides; cannot estimate a modulus");
  }
  return best;
}

}  // namespace svi::vi
