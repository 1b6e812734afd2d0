#include "svi/demand_response.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "svi/errors.hpp"
#include "svi/rng.hpp"

namespace svi::dr {

namespace {

// Distinct deterministic seeds for the independent random purposes inside an
// experiment (scenario data, energy draws, Monte Carlo), derived from the
// user seed by an invertible 64-bit mix.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t purpose) {
  std::uint64_t z = seed + purpose * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix covariance_factor(const Matrix& Sigma) {
  Eigen::LLT<Matrix> llt(Sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Sigma);
  const Vector clamped = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * clamped.asDiagonal();
}

double truncated_gaussian(const TruncatedGaussian& law, Philox& gen) {
  if (!(law.sd >= 0.0) || !(law.lo <= law.hi)) {
    throw InvalidQueryError("energy law needs sd >= 0 and lo <= hi");
  }
  if (law.sd == 0.0) return std::clamp(law.mean, law.lo, law.hi);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double draw = law.mean + law.sd * gen.normal();
    if (draw >= law.lo && draw <= law.hi) return draw;
  }
  throw InvalidQueryError("energy law rejects essentially every draw; widen [lo, hi]");
}

}  // namespace

std::vector<Vector> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("parse-error", "cannot open profile file: " + path);
  std::vector<Vector> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> values;
    const char* ptr = line.data();
    const char* end = line.data() + line.size();
    while (ptr < end) {
      while (ptr < end && (*ptr == ' ' || *ptr == '\t')) ++ptr;
      double v = 0.0;
      const auto [next, ec] = std::from_chars(ptr, end, v);
      if (ec != std::errc()) {
        throw ParseError("parse-error", "profile file line " + std::to_string(lineno) +
                                            ": expected a number");
      }
      values.push_back(v);
      ptr = next;
      while (ptr < end && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
      if (ptr < end) {
        if (*ptr != ',') {
          throw ParseError("parse-error", "profile file line " + std::to_string(lineno) +
                                              ": expected a comma separator");
        }
        ++ptr;
      }
    }
    if (values.empty()) continue;
    for (double v : values) {
      if (v < 0.0) {
        throw Error("negative-demand",
                    "profile file line " + std::to_string(lineno) + " has a negative entry");
      }
    }
    if (!rows.empty() && static_cast<long>(values.size()) != rows.front().size()) {
      throw Error("inconsistent-width",
                  "profile file line " + std::to_string(lineno) + " has " +
                      std::to_string(values.size()) + " entries, expected " +
                      std::to_string(rows.front().size()));
    }
    rows.push_back(Eigen::Map<const Vector>(values.data(), static_cast<long>(values.size())));
  }
  if (rows.empty()) throw ParseError("parse-error", "profile file has no rows: " + path);
  return rows;
}

void save_profiles(const std::string& path, const std::vector<Vector>& profiles) {
  std::ofstream out(path);
  if (!out) throw ParseError("parse-error", "cannot write profile file: " + path);
  out.precision(17);
  for (const Vector& row : profiles) {
    for (long t = 0; t < row.size(); ++t) {
      if (t) out << ',';
      out << row[t];
    }
    out << '\n';
  }
}

GaussianModel fit_gaussian(const std::vector<Vector>& profiles, double ridge) {
  if (profiles.size() < 2) {
    throw InvalidQueryError("fitting a model needs at least two profiles");
  }
  const long horizon = profiles.front().size();
  for (const Vector& row : profiles) {
    if (row.size() != horizon) throw Error("inconsistent-width", "profiles differ in horizon");
  }
  const long count = static_cast<long>(profiles.size());

  GaussianModel model;
  model.mu = Vector::Zero(horizon);
  for (const Vector& row : profiles) model.mu += row;
  model.mu /= static_cast<double>(count);

  model.Sigma = Matrix::Zero(horizon, horizon);
  for (const Vector& row : profiles) {
    const Vector centered = row - model.mu;
    model.Sigma.noalias() += centered * centered.transpose();
  }
  model.Sigma /= static_cast<double>(count - 1);

  model.ridge_used =
      ridge >= 0.0 ? ridge
                   : 1e-6 * model.Sigma.trace() / static_cast<double>(horizon) + 1e-12;
  model.Sigma.diagonal().array() += model.ridge_used;
  return model;
}

std::vector<Vector> sample_profiles(const GaussianModel& model, long count, std::uint64_t seed,
                                    double* clip_fraction) {
  if (count < 1) throw InvalidQueryError("at least one sampled profile is required");
  const long horizon = model.mu.size();
  if (model.Sigma.rows() != horizon || model.Sigma.cols() != horizon) {
    throw DimensionMismatchError("model mean and covariance disagree on the horizon");
  }
  const Matrix L = covariance_factor(model.Sigma);
  std::vector<Vector> rows(static_cast<std::size_t>(count));
  long clipped = 0;
  for (long i = 0; i < count; ++i) {
    Philox gen(seed, static_cast<std::uint64_t>(i));
    Vector z(horizon);
    for (long t = 0; t < horizon; ++t) z[t] = gen.normal();
    Vector draw = model.mu + L * z;
    for (long t = 0; t < horizon; ++t) {
      if (draw[t] < 0.0) {
        draw[t] = 0.0;
        ++clipped;
      }
    }
    rows[static_cast<std::size_t>(i)] = std::move(draw);
  }
  if (clip_fraction) {
    *clip_fraction =
        static_cast<double>(clipped) / static_cast<double>(count * horizon);
  }
  return rows;
}

games::GameSpec build_dr_game(const DRGameConfig& config) {
  const long m = config.agents;
  const long horizon = config.horizon;
  if (m < 1 || horizon < 1) throw InvalidQueryError("the game needs agents >= 1 and horizon >= 1");
  if (config.alpha.size() != horizon || config.beta_price.size() != horizon ||
      config.cap.size() != horizon || config.energy.size() != m) {
    throw DimensionMismatchError("game coefficient lengths disagree with agents/horizon");
  }
  if (config.alpha.minCoeff() <= 0.0) {
    throw InvalidQueryError("price sensitivities must be strictly positive");
  }
  if (config.cap.minCoeff() <= 0.0) throw InvalidQueryError("slot caps must be strictly positive");
  const double reach = config.cap.sum();
  for (long j = 0; j < m; ++j) {
    if (config.energy[j] < 0.0 || config.energy[j] > reach) {
      throw InfeasibleSetError("energy requirement of agent " + std::to_string(j) +
                               " cannot be met within the slot caps");
    }
  }

  const auto data = std::make_shared<const DRGameConfig>(config);
  const long n = m * horizon;

  games::GameSpec game;
  game.dims.assign(static_cast<std::size_t>(m), static_cast<int>(horizon));
  game.uncertainty = games::UncertaintyIn::costs;
  game.declared_alpha = config.alpha.minCoeff();
  game.declared_lipschitz = static_cast<double>(m + 1) * config.alpha.maxCoeff();

  const auto check_shapes = [data, n](const Vector& x, const Vector& d) {
    if (x.size() != n) {
      throw DimensionMismatchError("joint decision has dimension " + std::to_string(x.size()) +
                                   ", game expects " + std::to_string(n));
    }
    if (d.size() != data->horizon) {
      throw DimensionMismatchError("demand profile has length " + std::to_string(d.size()) +
                                   ", game expects " + std::to_string(data->horizon));
    }
  };

  game.cost_value = [data, check_shapes](int agent, const Vector& x, const Vector& d) {
    check_shapes(x, d);
    const Eigen::Map<const Matrix> X(x.data(), data->horizon, data->agents);
    const Vector sigma = X.rowwise().sum();
    const auto own = X.col(agent).array();
    return ((data->alpha.array() * sigma.array() + data->beta_price.array() * d.array()) * own)
        .sum();
  };
  game.cost_own_gradient = [data, check_shapes](int agent, const Vector& x, const Vector& d) {
    check_shapes(x, d);
    const Eigen::Map<const Matrix> X(x.data(), data->horizon, data->agents);
    const Vector sigma = X.rowwise().sum();
    return Vector(data->alpha.array() * (sigma.array() + X.col(agent).array()) +
                  data->beta_price.array() * d.array());
  };
  game.cost_own_quadratic = [data](int) { return Matrix(2.0 * data->alpha.asDiagonal()); };
  game.local_set = [data, n](int agent) {
    convex_sets::ConvexSet set(static_cast<int>(n));
    std::vector<int> coords(static_cast<std::size_t>(data->horizon));
    std::iota(coords.begin(), coords.end(), static_cast<int>(agent * data->horizon));
    set.add_box(coords, Vector::Zero(data->horizon), data->cap);
    const Vector ones = Vector::Ones(data->horizon);
    set.add_halfspace(coords, ones, data->energy[agent]);
    set.add_halfspace(coords, Vector(-ones), -data->energy[agent]);
    return set;
  };
  game.local_polyhedra.resize(static_cast<std::size_t>(m));
  for (long j = 0; j < m; ++j) {
    games::AgentPolyhedron& poly = game.local_polyhedra[static_cast<std::size_t>(j)];
    poly.A.resize(2 * horizon, horizon);
    poly.A.topRows(horizon) = Matrix::Identity(horizon, horizon);
    poly.A.bottomRows(horizon) = -Matrix::Identity(horizon, horizon);
    poly.b.resize(2 * horizon);
    poly.b.head(horizon) = config.cap;
    poly.b.tail(horizon).setZero();
    poly.E = Matrix::Ones(1, horizon);
    poly.f = Vector::Constant(1, config.energy[j]);
  }
  return game;
}

DRReport run_dr_experiment(const DRConfig& config) {
  if (config.agents < 1 || config.horizon < 1) {
    throw InvalidQueryError("experiment needs agents >= 1 and horizon >= 1");
  }
  if (!(config.beta > 0.0 && config.beta < 1.0)) {
    throw InvalidQueryError("the confidence parameter must lie strictly in (0, 1)");
  }

  DRReport report;
  report.config = config;
  const double damping = config.damping > 0.0
                             ? config.damping
                             : std::min(0.5, 3.6 / static_cast<double>(config.agents + 1));

  // -- data ------------------------------------------------------------------
  std::vector<Vector> scenarios;
  with_stage("data", [&] {
    if (config.data.path.empty()) {
      throw InvalidQueryError("a demand-profile CSV path is required");
    }
    const std::vector<Vector> rows = load_profiles(config.data.path);
    if (config.data.type == "csv") {
      scenarios = rows;
      report.model = fit_gaussian(rows);
      report.clip_fraction = 0.0;
    } else if (config.data.type == "gaussian") {
      report.model = fit_gaussian(rows);
      scenarios = sample_profiles(report.model, config.n_samples, mix_seed(config.seed, 1),
                                  &report.clip_fraction);
    } else {
      throw InvalidQueryError("unknown data type '" + config.data.type +
                              "' (expected \"csv\" or \"gaussian\")");
    }
    if (report.model.mu.size() != config.horizon) {
      throw Error("inconsistent-width",
                  "profiles have horizon " + std::to_string(report.model.mu.size()) +
                      ", experiment expects " + std::to_string(config.horizon));
    }
  });
  const long n_samples = static_cast<long>(scenarios.size());

  // -- game ------------------------------------------------------------------
  games::GameSpec game;
  with_stage("game", [&] {
    DRGameConfig gc;
    gc.agents = config.agents;
    gc.horizon = config.horizon;
    gc.alpha = Vector::Constant(config.horizon, config.alpha_coef);
    gc.beta_price = Vector::Constant(config.horizon, config.beta_coef);
    gc.cap = Vector::Constant(config.horizon, config.cap);
    gc.energy.resize(config.agents);
    Philox gen(mix_seed(config.seed, 2), 0);
    for (long j = 0; j < config.agents; ++j) {
      gc.energy[j] = truncated_gaussian(config.energy_law, gen);
    }
    report.energy = gc.energy;
    game = build_dr_game(gc);
  });
  const long n = config.agents * config.horizon;

  // -- equilibrium -----------------------------------------------------------
  games::RobustEquilibrium eq;
  with_stage("equilibrium", [&] {
    games::SREParams params;
    params.damping = damping;
    eq = games::solve_sampled_robust_eq(game, scenarios, params);
    if (!eq.converged) {
      throw Error("no-convergence", "best-response iteration did not close its gap");
    }
  });
  report.x_sr = eq.x_sr;
  report.t_sr = eq.t_sr;
  report.br_gap = eq.br_gap;
  report.equilibrium_converged = eq.converged;
  {
    const Eigen::Map<const Matrix> X(report.x_sr.data(), config.horizon, config.agents);
    report.sigma_profile = X.rowwise().sum();
  }

  // -- support ---------------------------------------------------------------
  with_stage("support", [&] {
    vi::ScenarioVIProblem lifted = games::build_epigraph_qvi(game, scenarios);
    vi::SolverParams params;
    params.qvi_damping = damping;
    params.qvi_tol = 1e-10;
    params.qvi_max_outer = 5000;
    Vector warm(n + config.agents);
    warm.head(n) = eq.x_sr;
    warm.tail(config.agents) = eq.t_sr;
    params.start = warm;
    support::SupportReport sr =
        support::count_support(lifted, params, config.comparison_tol);
    support::check_degeneracy(lifted, sr, params);
    support::assert_dimension_bound(sr, n + config.agents, true);
    report.s_star = sr.s_star;
    report.support_indices = sr.support_indices;
    report.degeneracy = sr.degeneracy_check;
    report.support_ambiguous = sr.ambiguous;
  });

  // -- certificates ------------------------------------------------------------
  with_stage("certificate", [&] {
    report.posterior = scenario_bounds::certify(report.s_star, n_samples, config.beta,
                                                scenario_bounds::CertificateKind::a_posteriori);
    report.prior = scenario_bounds::certify(n + config.agents, n_samples, config.beta,
                                            scenario_bounds::CertificateKind::a_priori);
  });

  // -- risk --------------------------------------------------------------------
  with_stage("risk", [&] {
    report.agent_risk.resize(static_cast<std::size_t>(config.agents));
    report.cost_samples.resize(config.agents, n_samples);
    const Eigen::Map<const Matrix> X(report.x_sr.data(), config.horizon, config.agents);
    const Vector alpha = Vector::Constant(config.horizon, config.alpha_coef);
    const Vector betap = Vector::Constant(config.horizon, config.beta_coef);
    for (long j = 0; j < config.agents; ++j) {
      const Vector own = X.col(j);
      const double fixed_part =
          (alpha.array() * report.sigma_profile.array() * own.array()).sum();
      const Vector a = betap.cwiseProduct(own);
      const double threshold = report.t_sr[j] - fixed_part;
      report.agent_risk[static_cast<std::size_t>(j)] =
          risk::gaussian_linear_risk(a, threshold, report.model.mu, report.model.Sigma).value;
      for (long i = 0; i < n_samples; ++i) {
        report.cost_samples(j, i) =
            game.cost_value(static_cast<int>(j), report.x_sr, scenarios[static_cast<std::size_t>(i)]);
      }
    }
    report.max_agent_risk =
        *std::max_element(report.agent_risk.begin(), report.agent_risk.end());
    report.certified = report.max_agent_risk <= report.posterior.epsilon;
  });

  // -- aggregate risk ----------------------------------------------------------
  with_stage("aggregate-risk", [&] {
    const Matrix L = covariance_factor(report.model.Sigma);
    const Vector mu = report.model.mu;
    const long horizon = config.horizon;
    const auto sampler = [mu, L, horizon](Philox& gen) {
      Vector z(horizon);
      for (long t = 0; t < horizon; ++t) z[t] = gen.normal();
      return Vector((mu + L * z).cwiseMax(0.0));
    };
    std::vector<games::AgentRiskSpec> specs;
    specs.reserve(static_cast<std::size_t>(config.agents));
    for (long j = 0; j < config.agents; ++j) {
      specs.push_back(games::agent_risk_spec(game, eq, static_cast<int>(j)));
    }
    const auto predicate = [specs](const Vector& delta) {
      return std::any_of(specs.begin(), specs.end(),
                         [&](const games::AgentRiskSpec& s) { return s.violation(delta); });
    };
    report.aggregate_mc =
        risk::mc_risk(predicate, sampler, config.mc_samples, mix_seed(config.seed, 3));
  });

  return report;
}

}  // namespace svi::dr
