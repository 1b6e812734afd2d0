#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "svi/convex_sets.hpp"
#include "svi/types.hpp"
#include "svi/vi_solver.hpp"

namespace svi::games {

// Where the sampled uncertainty enters the game.
enum class UncertaintyIn { constraints, costs };

// Raw row description of one agent's local constraint set (on the agent's own
// block only). Needed by the exact best-response path.
struct AgentPolyhedron {
  Matrix A;  // inequality rows A x <= b
  Vector b;
  Matrix E;  // equality rows E x = f
  Vector f;
};

// A game among `dims.size()` agents; agent j controls the block of size
// dims[j] starting at offset(j) inside the joint decision vector. Costs are
// evaluated through callbacks so front ends can supply arbitrary smooth
// structure; the exact best-response machinery additionally requires the cost
// to be quadratic in the agent's own block with a scenario-independent
// Hessian (cost_own_quadratic) and polyhedral local sets (local_polyhedra).
//
// Convention: games whose uncertainty sits in the constraints have
// scenario-free costs; their cost callbacks receive an empty scenario vector.
struct GameSpec {
  std::vector<int> dims;
  UncertaintyIn uncertainty = UncertaintyIn::constraints;

  // cost of agent j at joint decision x under scenario payload delta
  std::function<double(int, const Vector&, const Vector&)> cost_value;
  // gradient of that cost with respect to agent j's own block
  std::function<Vector(int, const Vector&, const Vector&)> cost_own_gradient;
  // optional: scenario-free Hessian of the cost in the own block
  std::function<Matrix(int)> cost_own_quadratic;

  // scenario-free local set of agent j, built full-dimensional on the joint
  // space but touching only the agent's block
  std::function<convex_sets::ConvexSet(int)> local_set;
  // optional: scenario-dependent local set (uncertainty in constraints)
  std::function<convex_sets::ConvexSet(int, const Vector&)> local_set_sampled;
  // optional: raw rows of local_set(j) on the agent's own coordinates
  std::vector<AgentPolyhedron> local_polyhedra;

  double declared_alpha = 0.0;      // strong monotonicity of the stacked gradient map
  double declared_lipschitz = -1.0;  // Lipschitz constant of the same map (< 0: unknown)

  int agents() const { return static_cast<int>(dims.size()); }
  int dim() const;
  int offset(int j) const;
};

// Stacks the per-agent own-block gradients into the Nash operator and the
// sampled constraint sets into scenario sets: the solution of the resulting
// problem is the Nash equilibrium of the game restricted to decisions
// feasible under every sampled scenario. Requires uncertainty in constraints.
vi::ScenarioVIProblem assemble_nash_vi(const GameSpec& game, const std::vector<Vector>& samples);

struct WorstCase {
  double value = -std::numeric_limits<double>::infinity();
  Vector subgradient;  // own-block gradient of the achieving scenario
  int argmax = -1;     // lowest achieving index on ties
};

// max over samples of agent j's cost at x, with one subgradient of the max.
WorstCase worst_case_cost(const GameSpec& game, const std::vector<Vector>& samples,
                          const Vector& x, int agent);

struct SREParams {
  long subgradient_budget = 2000;  // phase-1 projected subgradient steps
  double damping = 0.5;            // phase-2 best-response damping in (0, 1]
  double tol = 1e-10;              // phase-2 fixed-point gap target (sup norm)
  long max_outer = 5000;           // phase-2 sweep budget
  double active_tol = 1e-9;        // relative slack when listing active scenarios
  convex_sets::ProjectionControls projection{};
};

struct RobustEquilibrium {
  Vector x_sr;                        // joint decision
  Vector t_sr;                        // per-agent worst-case cost at x_sr
  std::vector<int> active_scenarios;  // scenarios achieving some agent's worst case, ascending
  double br_gap = std::numeric_limits<double>::infinity();  // final fixed-point gap
  long iterations = 0;                                      // phase-2 sweeps
  bool converged = false;
};

// Equilibrium in worst-case costs over the sampled scenarios: a projected
// subgradient phase finds the neighborhood, then damped exact best-response
// sweeps (each agent's response solved as a quadratic-plus-pointwise-max
// program) contract onto the fixed point. Requires uncertainty in costs,
// cost_own_quadratic, and local_polyhedra.
RobustEquilibrium solve_sampled_robust_eq(const GameSpec& game, const std::vector<Vector>& samples,
                                          const SREParams& params = {});

// Reformulates the worst-case game on the lifted space (x, t): the operator
// is constant (zeros on x, ones on t) and each scenario contributes one
// quadratic epigraph constraint per agent, built at the current anchor. The
// returned problem carries an exact best-response hook and solves with the
// anchored fixed-point iteration; its solutions satisfy x = x_sr and
// t_j = agent j's worst-case cost. The structural support bound for this
// problem is dim + agents.
vi::ScenarioVIProblem build_epigraph_qvi(const GameSpec& game, const std::vector<Vector>& samples);

struct AgentRiskSpec {
  int agent = -1;
  double threshold = 0.0;  // frozen worst-case cost of the agent at x_sr
  // true when a scenario pushes the agent's cost strictly above the frozen
  // threshold (small relative slack absorbs re-evaluation roundoff)
  std::function<bool(const Vector&)> violation;
};

// The per-agent violation event evaluated out of sample.
AgentRiskSpec agent_risk_spec(const GameSpec& game, const RobustEquilibrium& eq, int agent);

}  // namespace svi::games
