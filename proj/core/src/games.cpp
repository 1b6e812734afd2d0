#include "svi/games.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "svi/errors.hpp"
#include "svi/piecewise_qp.hpp"

namespace svi::games {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidQueryError(what);
}

void check_game(const GameSpec& game) {
  require(!game.dims.empty(), "game needs at least one agent");
  for (int d : game.dims) require(d > 0, "agent blocks must have positive dimension");
  require(static_cast<bool>(game.cost_value), "game needs a cost callback");
  require(static_cast<bool>(game.cost_own_gradient), "game needs an own-gradient callback");
  require(static_cast<bool>(game.local_set), "game needs local constraint sets");
}

void check_exact_path(const GameSpec& game) {
  require(static_cast<bool>(game.cost_own_quadratic),
          "exact best responses need the quadratic own-block cost");
  require(game.local_polyhedra.size() == game.dims.size(),
          "exact best responses need one polyhedron per agent");
}

// Affine-in-own-block data of agent j's cost at a fixed rival profile: with
// the own block zeroed, the remaining gradient is the linear term and the
// remaining value the offset.
struct AffinePiece {
  Vector a;
  double b;
};

AffinePiece piece_at(const GameSpec& game, int agent, const Vector& x, const Vector& delta) {
  Vector probe = x;
  probe.segment(game.offset(agent), game.dims[static_cast<std::size_t>(agent)]).setZero();
  return {game.cost_own_gradient(agent, probe, delta), game.cost_value(agent, probe, delta)};
}

// One damped sweep of exact best responses for the worst-case game; returns
// the sup-norm response gap before damping. `values` receives each agent's
// exact worst-case cost at its own response point.
double best_response_sweep(const GameSpec& game, const std::vector<Vector>& samples,
                           const std::vector<char>* mask, Vector& x, double damping,
                           Vector* values, std::vector<std::vector<int>>* active) {
  const int m = game.agents();
  double gap = 0.0;
  Vector next = x;
  for (int j = 0; j < m; ++j) {
    const int off = game.offset(j);
    const int nj = game.dims[static_cast<std::size_t>(j)];

    qp::PiecewiseQP sub;
    sub.D = game.cost_own_quadratic(j);
    sub.c = Vector::Zero(nj);
    const AgentPolyhedron& poly = game.local_polyhedra[static_cast<std::size_t>(j)];
    sub.A = poly.A;
    sub.b = poly.b;
    sub.E = poly.E;
    sub.f = poly.f;

    long rows = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!mask || (*mask)[i]) ++rows;
    }
    require(rows > 0, "worst-case response needs at least one active scenario");
    sub.piece_a.resize(rows, nj);
    sub.piece_b.resize(rows);
    std::vector<int> piece_scenario(static_cast<std::size_t>(rows));
    long r = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (mask && !(*mask)[i]) continue;
      const AffinePiece piece = piece_at(game, j, x, samples[i]);
      sub.piece_a.row(r) = piece.a;
      sub.piece_b[r] = piece.b;
      piece_scenario[static_cast<std::size_t>(r)] = static_cast<int>(i);
      ++r;
    }

    const qp::PiecewiseQPResult response = qp::solve_piecewise_qp(sub, x.segment(off, nj));
    gap = std::max(gap,
                   (response.x - x.segment(off, nj)).lpNorm<Eigen::Infinity>());
    next.segment(off, nj) = (1.0 - damping) * x.segment(off, nj) + damping * response.x;
    if (values) (*values)[j] = response.value;
    if (active) {
      auto& list = (*active)[static_cast<std::size_t>(j)];
      list.clear();
      for (int p : response.active_pieces) list.push_back(piece_scenario[static_cast<std::size_t>(p)]);
    }
  }
  x = std::move(next);
  return gap;
}

}  // namespace

int GameSpec::dim() const { return std::accumulate(dims.begin(), dims.end(), 0); }

int GameSpec::offset(int j) const {
  if (j < 0 || j >= agents()) {
    throw InvalidQueryError("agent index " + std::to_string(j) + " out of range");
  }
  return std::accumulate(dims.begin(), dims.begin() + j, 0);
}

vi::ScenarioVIProblem assemble_nash_vi(const GameSpec& game, const std::vector<Vector>& samples) {
  check_game(game);
  require(game.uncertainty == UncertaintyIn::constraints,
          "a fixed-set problem needs the uncertainty in the constraints");
  require(static_cast<bool>(game.local_set_sampled) || samples.empty(),
          "sampled scenarios need a scenario-dependent local set");
  const int n = game.dim();

  vi::ScenarioVIProblem problem;
  problem.mode = vi::Mode::vi;
  problem.op.dim = n;
  problem.op.strong_monotonicity = game.declared_alpha;
  problem.op.lipschitz = game.declared_lipschitz;
  problem.op.eval = [game](const Vector& x) {
    Vector out(x.size());
    const Vector none;
    for (int j = 0; j < game.agents(); ++j) {
      out.segment(game.offset(j), game.dims[static_cast<std::size_t>(j)]) =
          game.cost_own_gradient(j, x, none);
    }
    return out;
  };

  problem.base = convex_sets::ConvexSet(n);
  for (int j = 0; j < game.agents(); ++j) problem.base.absorb(game.local_set(j));
  problem.scenarios.reserve(samples.size());
  for (const Vector& delta : samples) {
    convex_sets::ConvexSet set(n);
    for (int j = 0; j < game.agents(); ++j) set.absorb(game.local_set_sampled(j, delta));
    problem.scenarios.push_back(std::move(set));
  }
  return problem;
}

WorstCase worst_case_cost(const GameSpec& game, const std::vector<Vector>& samples,
                          const Vector& x, int agent) {
  check_game(game);
  require(!samples.empty(), "worst case over an empty scenario list is undefined");
  if (x.size() != game.dim()) {
    throw DimensionMismatchError("decision has dimension " + std::to_string(x.size()) +
                                 ", game expects " + std::to_string(game.dim()));
  }
  WorstCase out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double value = game.cost_value(agent, x, samples[i]);
    if (value > out.value) {
      out.value = value;
      out.argmax = static_cast<int>(i);
    }
  }
  out.subgradient = game.cost_own_gradient(agent, x, samples[static_cast<std::size_t>(out.argmax)]);
  return out;
}

RobustEquilibrium solve_sampled_robust_eq(const GameSpec& game, const std::vector<Vector>& samples,
                                          const SREParams& params) {
  check_game(game);
  check_exact_path(game);
  require(game.uncertainty == UncertaintyIn::costs,
          "a worst-case equilibrium needs the uncertainty in the costs");
  require(!samples.empty(), "worst-case equilibrium needs at least one scenario");
  require(params.damping > 0.0 && params.damping <= 1.0, "damping must lie in (0, 1]");
  const int n = game.dim();
  const int m = game.agents();

  convex_sets::ConvexSet domain(n);
  for (int j = 0; j < m; ++j) domain.absorb(game.local_set(j));

  // Phase 1: projected subgradient on the stacked worst-case costs. This is
  // a warm start: the merit of the chosen subgradient selection need not
  // vanish at a kinked solution, so no convergence is claimed here.
  Vector x = domain.project(Vector::Zero(n), params.projection);
  if (game.declared_alpha > 0.0 && params.subgradient_budget > 0) {
    vi::OperatorOracle op;
    op.dim = n;
    op.strong_monotonicity = game.declared_alpha;
    op.subgradient_eval = [&game, &samples](const Vector& point) {
      Vector g(point.size());
      for (int j = 0; j < game.agents(); ++j) {
        g.segment(game.offset(j), game.dims[static_cast<std::size_t>(j)]) =
            worst_case_cost(game, samples, point, j).subgradient;
      }
      return g;
    };
    vi::SolverParams warm;
    warm.max_iterations = params.subgradient_budget;
    warm.subgradient_tol = 0.0;  // run the full budget
    warm.projection = params.projection;
    warm.start = x;
    x = vi::solve_vi(op, domain, warm).x;
  }

  // Phase 2: damped exact best responses until the response gap closes.
  RobustEquilibrium eq;
  Vector values(m);
  std::vector<std::vector<int>> active(static_cast<std::size_t>(m));
  long sweep = 0;
  for (; sweep < params.max_outer; ++sweep) {
    eq.br_gap = best_response_sweep(game, samples, nullptr, x, params.damping, &values, &active);
    if (eq.br_gap <= params.tol) {
      ++sweep;
      break;
    }
  }
  eq.iterations = sweep;
  eq.converged = eq.br_gap <= params.tol;
  eq.x_sr = x;
  eq.t_sr.resize(m);
  std::vector<char> seen(samples.size(), 0);
  for (int j = 0; j < m; ++j) {
    const WorstCase wc = worst_case_cost(game, samples, x, j);
    eq.t_sr[j] = wc.value;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double value = game.cost_value(j, x, samples[i]);
      if (value >= wc.value - params.active_tol * (1.0 + std::abs(wc.value))) seen[i] = 1;
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (seen[i]) eq.active_scenarios.push_back(static_cast<int>(i));
  }
  return eq;
}

vi::ScenarioVIProblem build_epigraph_qvi(const GameSpec& game, const std::vector<Vector>& samples) {
  check_game(game);
  check_exact_path(game);
  require(game.uncertainty == UncertaintyIn::costs,
          "the lifted reformulation applies to uncertainty in the costs");
  require(!samples.empty(), "the lifted reformulation needs at least one scenario");
  const int n = game.dim();
  const int m = game.agents();
  const int total = n + m;

  vi::ScenarioVIProblem problem;
  problem.mode = vi::Mode::qvi;
  problem.op.dim = total;
  problem.op.lipschitz = 0.0;  // constant operator
  Vector direction = Vector::Zero(total);
  direction.tail(m).setOnes();
  problem.op.eval = [direction](const Vector&) { return direction; };

  // Local polyhedra, embedded on the x-part of the lifted space.
  problem.base = convex_sets::ConvexSet(total);
  for (int j = 0; j < m; ++j) {
    const AgentPolyhedron& poly = game.local_polyhedra[static_cast<std::size_t>(j)];
    const int off = game.offset(j);
    const int nj = game.dims[static_cast<std::size_t>(j)];
    std::vector<int> coords(static_cast<std::size_t>(nj));
    std::iota(coords.begin(), coords.end(), off);
    for (long r = 0; r < poly.A.rows(); ++r) {
      problem.base.add_halfspace(coords, poly.A.row(r), poly.b[r]);
    }
    for (long r = 0; r < poly.E.rows(); ++r) {
      problem.base.add_halfspace(coords, poly.E.row(r), poly.f[r]);
      problem.base.add_halfspace(coords, Vector(-poly.E.row(r)), -poly.f[r]);
    }
  }

  // One scenario set per sample: for every agent, the scenario's cost at the
  // anchor rivals must sit below the agent's epigraph level. The spec is
  // shared across the scenario closures rather than copied into each.
  const auto shared = std::make_shared<const GameSpec>(game);
  problem.scenario_maps.reserve(samples.size());
  for (const Vector& delta : samples) {
    problem.scenario_maps.push_back([shared, delta, n, m](const Vector& anchor) {
      convex_sets::ConvexSet set(n + m);
      const Vector anchor_x = anchor.head(n);
      for (int j = 0; j < m; ++j) {
        const int off = shared->offset(j);
        const int nj = shared->dims[static_cast<std::size_t>(j)];
        const AffinePiece piece = piece_at(*shared, j, anchor_x, delta);
        std::vector<int> coords(static_cast<std::size_t>(nj));
        std::iota(coords.begin(), coords.end(), off);
        convex_sets::QuadraticForm h;
        h.Q = shared->cost_own_quadratic(j);
        h.c = piece.a;
        h.d = piece.b;
        set.add_epigraph(coords, n + j, h);
      }
      return set;
    });
  }

  // Exact inner map: independently per agent, minimize the epigraph level of
  // the worst active scenario cost at the anchor rivals.
  problem.best_response = [shared, samples, n, m](const Vector& anchor,
                                                  const std::vector<char>& mask) {
    Vector inner = anchor;
    Vector x = anchor.head(n);
    Vector values(m);
    best_response_sweep(*shared, samples, &mask, x, 1.0, &values, nullptr);
    inner.head(n) = x;
    inner.tail(m) = values;
    return inner;
  };
  return problem;
}

AgentRiskSpec agent_risk_spec(const GameSpec& game, const RobustEquilibrium& eq, int agent) {
  check_game(game);
  if (agent < 0 || agent >= game.agents()) {
    throw InvalidQueryError("agent index " + std::to_string(agent) + " out of range");
  }
  if (eq.x_sr.size() != game.dim() || eq.t_sr.size() != game.agents()) {
    throw DimensionMismatchError("equilibrium does not match the game shape");
  }
  AgentRiskSpec spec;
  spec.agent = agent;
  spec.threshold = eq.t_sr[agent];
  const double slack = 1e-12 * (1.0 + std::abs(spec.threshold));
  const double threshold = spec.threshold;
  spec.violation = [cost = game.cost_value, x = eq.x_sr, agent, threshold,
                    slack](const Vector& delta) {
    return cost(agent, x, delta) > threshold + slack;
  };
  return spec;
}

}  // namespace svi::games
