#include "svicli/json_io.hpp"

#include <Eigen/Dense>
#include <algorithm>

#include "svi/errors.hpp"

namespace svi::cli {

namespace {

[[noreturn]] void bad(const std::string& what, const std::string& detail) {
  throw ParseError("parse-error", what + ": " + detail);
}

const json& field(const json& node, const char* key, const std::string& what) {
  const auto it = node.find(key);
  if (it == node.end()) bad(what, std::string("missing key \"") + key + '"');
  return *it;
}

double number_field(const json& node, const char* key, const std::string& what) {
  const json& v = field(node, key, what);
  if (!v.is_number()) bad(what, std::string("key \"") + key + "\" must be a number");
  return v.get<double>();
}

}  // namespace

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (long i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vector vector_from_json(const json& node, const std::string& what) {
  if (!node.is_array()) bad(what, "expected an array of numbers");
  Vector v(static_cast<long>(node.size()));
  long i = 0;
  for (const json& item : node) {
    if (!item.is_number()) bad(what, "expected an array of numbers");
    v[i++] = item.get<double>();
  }
  return v;
}

Matrix matrix_from_json(const json& node, const std::string& what) {
  if (!node.is_array() || node.empty()) bad(what, "expected a non-empty array of rows");
  const long rows = static_cast<long>(node.size());
  long cols = -1;
  Matrix m;
  long r = 0;
  for (const json& row : node) {
    const Vector v = vector_from_json(row, what);
    if (cols < 0) {
      cols = v.size();
      m.resize(rows, cols);
    } else if (v.size() != cols) {
      bad(what, "rows must all have the same length");
    }
    m.row(r++) = v.transpose();
  }
  return m;
}

convex_sets::ConvexSet set_from_json(const json& node, int dim, const std::string& what) {
  if (!node.is_object()) bad(what, "a set description must be an object");
  convex_sets::ConvexSet set(dim);
  if (const auto it = node.find("halfspaces"); it != node.end()) {
    if (!it->is_array()) bad(what, "\"halfspaces\" must be an array");
    for (const json& hs : *it) {
      set.add_halfspace(vector_from_json(field(hs, "a", what), what + ".halfspaces.a"),
                        number_field(hs, "b", what));
    }
  }
  if (const auto it = node.find("box"); it != node.end()) {
    set.add_box(vector_from_json(field(*it, "l", what), what + ".box.l"),
                vector_from_json(field(*it, "u", what), what + ".box.u"));
  }
  if (const auto it = node.find("quadratics"); it != node.end()) {
    if (!it->is_array()) bad(what, "\"quadratics\" must be an array");
    for (const json& q : *it) {
      set.add_quadratic(matrix_from_json(field(q, "Q", what), what + ".quadratics.Q"),
                        vector_from_json(field(q, "c", what), what + ".quadratics.c"),
                        number_field(q, "b", what));
    }
  }
  for (const auto& [key, value] : node.items()) {
    (void)value;
    if (key != "halfspaces" && key != "box" && key != "quadratics") {
      bad(what, "unknown set key \"" + key + '"');
    }
  }
  return set;
}

namespace {

// Affine map (K, m) with exact monotonicity constants derived from K.
struct AffineOperator {
  Matrix K;
  Vector m;
};

void install_affine(vi::ScenarioVIProblem& problem, AffineOperator op) {
  const long n = op.K.rows();
  const Matrix sym = 0.5 * (op.K + op.K.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const double alpha = eig.eigenvalues().minCoeff();
  const double lipschitz = op.K.jacobiSvd().singularValues()(0);
  problem.op.dim = static_cast<int>(n);
  problem.op.strong_monotonicity = std::max(0.0, alpha);
  problem.op.lipschitz = lipschitz;
  problem.op.eval = [data = std::make_shared<AffineOperator>(std::move(op))](const Vector& x) {
    return Vector(data->K * x + data->m);
  };
}

AffineOperator demand_response_operator(const json& game, const std::string& what) {
  const long agents = static_cast<long>(number_field(game, "M", what));
  if (agents < 1) bad(what, "\"M\" must be at least 1");
  const Vector alpha = vector_from_json(field(game, "alpha", what), what + ".alpha");
  const Vector beta = vector_from_json(field(game, "beta_price", what), what + ".beta_price");
  const Vector demand = vector_from_json(field(game, "demand", what), what + ".demand");
  const long horizon = alpha.size();
  if (beta.size() != horizon || demand.size() != horizon) {
    bad(what, "alpha, beta_price and demand must share the horizon length");
  }
  const long n = agents * horizon;
  AffineOperator out;
  out.K = Matrix::Zero(n, n);
  out.m.resize(n);
  // Own gradient of agent j in slot t: alpha_t (sigma_t + x_jt) + beta_t d_t.
  for (long j = 0; j < agents; ++j) {
    for (long r = 0; r < agents; ++r) {
      for (long t = 0; t < horizon; ++t) {
        out.K(j * horizon + t, r * horizon + t) = alpha[t] * (r == j ? 2.0 : 1.0);
      }
    }
    out.m.segment(j * horizon, horizon) = beta.cwiseProduct(demand);
  }
  return out;
}

AffineOperator affine_quadratic_operator(const json& game, const std::string& what) {
  const json& dims_node = field(game, "dims", what);
  if (!dims_node.is_array() || dims_node.empty()) bad(what, "\"dims\" must be a non-empty array");
  std::vector<long> dims;
  long n = 0;
  for (const json& d : dims_node) {
    if (!d.is_number_integer() || d.get<long>() < 1) bad(what, "\"dims\" entries must be >= 1");
    dims.push_back(d.get<long>());
    n += d.get<long>();
  }
  const json& q_node = field(game, "Q", what);
  if (!q_node.is_array() || q_node.size() != dims.size()) {
    bad(what, "\"Q\" must hold one own-block matrix per agent");
  }
  AffineOperator out;
  out.K = Matrix::Zero(n, n);
  long off = 0;
  long j = 0;
  for (const json& qj : q_node) {
    const Matrix Q = matrix_from_json(qj, what + ".Q");
    if (Q.rows() != dims[static_cast<std::size_t>(j)] || Q.cols() != Q.rows()) {
      bad(what, "own-block matrix " + std::to_string(j) + " has the wrong shape");
    }
    out.K.block(off, off, Q.rows(), Q.rows()) = Q;
    off += Q.rows();
    ++j;
  }
  if (const auto it = game.find("C"); it != game.end()) {
    const Matrix C = matrix_from_json(*it, what + ".C");
    if (C.rows() != n || C.cols() != n) bad(what, "\"C\" must be dim x dim");
    // Rival coupling only; own blocks come from Q.
    Matrix masked = C;
    off = 0;
    for (long dj : dims) {
      masked.block(off, off, dj, dj).setZero();
      off += dj;
    }
    out.K += masked;
  }
  out.m = game.contains("c") ? vector_from_json(field(game, "c", what), what + ".c")
                             : Vector(Vector::Zero(n));
  if (out.m.size() != n) bad(what, "\"c\" must have the joint dimension");
  return out;
}

}  // namespace

vi::ScenarioVIProblem problem_from_json(const json& node, bool qvi) {
  const std::string what = "problem";
  if (!node.is_object()) bad(what, "a problem description must be an object");
  const json& op_node = field(node, "operator", what);
  const std::string type = field(op_node, "type", what + ".operator").get<std::string>();

  vi::ScenarioVIProblem problem;
  if (type == "affine") {
    AffineOperator op;
    op.K = matrix_from_json(field(op_node, "A", what + ".operator"), what + ".operator.A");
    op.m = vector_from_json(field(op_node, "b", what + ".operator"), what + ".operator.b");
    if (op.K.rows() != op.K.cols() || op.m.size() != op.K.rows()) {
      bad(what, "operator needs a square \"A\" and matching \"b\"");
    }
    install_affine(problem, std::move(op));
  } else if (type == "game") {
    const json& game = field(op_node, "game", what + ".operator");
    const std::string model =
        field(game, "cost_model", what + ".operator.game").get<std::string>();
    if (model == "demand_response") {
      install_affine(problem, demand_response_operator(game, what + ".operator.game"));
    } else if (model == "affine_quadratic") {
      install_affine(problem, affine_quadratic_operator(game, what + ".operator.game"));
    } else {
      bad(what, "unknown cost model \"" + model + '"');
    }
  } else {
    bad(what, "unknown operator type \"" + type + '"');
  }

  const int dim = problem.op.dim;
  problem.base = node.contains("base")
                     ? set_from_json(node["base"], dim, what + ".base")
                     : convex_sets::ConvexSet(dim);
  std::vector<convex_sets::ConvexSet> scenario_sets;
  if (const auto it = node.find("scenarios"); it != node.end()) {
    if (!it->is_array()) bad(what, "\"scenarios\" must be an array of set descriptions");
    long index = 0;
    for (const json& s : *it) {
      scenario_sets.push_back(
          set_from_json(s, dim, what + ".scenarios[" + std::to_string(index) + "]"));
      ++index;
    }
  }
  if (qvi) {
    problem.mode = vi::Mode::qvi;
    for (auto& set : scenario_sets) {
      problem.scenario_maps.push_back(
          [captured = std::move(set)](const Vector&) { return captured; });
    }
  } else {
    problem.mode = vi::Mode::vi;
    problem.scenarios = std::move(scenario_sets);
  }
  return problem;
}

json certificate_to_json(const scenario_bounds::Certificate& cert) {
  json out = json::object();
  out["k"] = cert.k;
  out["N"] = cert.n_samples;
  out["beta"] = cert.beta;
  out["t"] = cert.t_value;
  out["epsilon"] = cert.epsilon;
  out["kind"] = scenario_bounds::kind_name(cert.kind);
  out["residual"] = cert.residual;
  return out;
}

json solution_to_json(const vi::Solution& solution) {
  json out = json::object();
  out["x"] = vector_to_json(solution.x);
  out["residual"] = solution.natural_residual;
  out["iterations"] = solution.iterations;
  out["converged"] = solution.converged;
  return out;
}

std::string check_outcome_name(support::CheckOutcome outcome) {
  switch (outcome) {
    case support::CheckOutcome::passed: return "passed";
    case support::CheckOutcome::failed: return "failed";
    default: return "skipped";
  }
}

json support_report_to_json(const support::SupportReport& report) {
  json out = json::object();
  out["s_star"] = report.s_star;
  out["support_indices"] = report.support_indices;
  out["displacement"] = report.displacement;
  out["comparison_tol"] = report.comparison_tol;
  out["degeneracy"] = check_outcome_name(report.degeneracy_check);
  out["ambiguous"] = report.ambiguous;
  out["unresolved_indices"] = report.unresolved_indices;
  out["valid"] = report.valid;
  out["x_star"] = vector_to_json(report.x_star);
  return out;
}

json risk_estimate_to_json(const risk::RiskEstimate& estimate) {
  json out = json::object();
  out["value"] = estimate.value;
  out["method"] = estimate.method;
  out["ci_low"] = estimate.ci_low;
  out["ci_high"] = estimate.ci_high;
  out["samples_used"] = estimate.samples_used;
  out["seed"] = estimate.seed;
  return out;
}

json coverage_to_json(const risk::CoverageResult& result) {
  json out = json::object();
  out["trials"] = result.trials;
  out["excluded"] = result.excluded;
  out["violations"] = result.violations;
  out["beta"] = result.beta;
  out["empirical_rate"] = result.empirical_rate;
  out["s_star_histogram"] = result.s_star_histogram;
  return out;
}

json dr_report_to_json(const dr::DRReport& report) {
  const dr::DRConfig& config = report.config;
  json cfg = json::object();
  cfg["M"] = config.agents;
  cfg["T"] = config.horizon;
  cfg["N"] = config.n_samples;
  cfg["beta"] = config.beta;
  cfg["alpha"] = config.alpha_coef;
  cfg["beta_price"] = config.beta_coef;
  cfg["cap"] = config.cap;
  cfg["gamma_law"] = {{"mean", config.energy_law.mean},
                      {"sd", config.energy_law.sd},
                      {"lo", config.energy_law.lo},
                      {"hi", config.energy_law.hi}};
  json data = json::object();
  data["type"] = config.data.type;
  if (config.data.type == "gaussian") {
    data["source_csv"] = config.data.path;
  } else {
    data["path"] = config.data.path;
  }
  cfg["data"] = std::move(data);
  cfg["seed"] = config.seed;
  cfg["mc_samples"] = config.mc_samples;
  cfg["damping"] = config.damping;
  cfg["comparison_tol"] = config.comparison_tol;

  json out = json::object();
  out["config"] = std::move(cfg);
  out["units"] = {{"alpha", "price per unit consumption"},
                  {"beta_price", "price per unit inflexible demand"},
                  {"energy", "consumption units over the horizon"},
                  {"cost", "price units"}};
  out["model"] = {{"mu", vector_to_json(report.model.mu)},
                  {"Sigma", matrix_to_json(report.model.Sigma)},
                  {"ridge_used", report.model.ridge_used}};
  out["clip_fraction"] = report.clip_fraction;
  out["energy"] = vector_to_json(report.energy);
  out["x_sr"] = vector_to_json(report.x_sr);
  out["t_sr"] = vector_to_json(report.t_sr);
  out["sigma_profile"] = vector_to_json(report.sigma_profile);
  out["br_gap"] = report.br_gap;
  out["equilibrium_converged"] = report.equilibrium_converged;
  out["s_star"] = report.s_star;
  out["support_indices"] = report.support_indices;
  out["degeneracy"] = check_outcome_name(report.degeneracy);
  out["support_ambiguous"] = report.support_ambiguous;
  out["posterior_certificate"] = certificate_to_json(report.posterior);
  out["prior_certificate"] = certificate_to_json(report.prior);
  out["agent_risk"] = report.agent_risk;
  out["max_agent_risk"] = report.max_agent_risk;
  out["certified"] = report.certified;
  out["aggregate_mc"] = risk_estimate_to_json(report.aggregate_mc);
  out["cost_samples"] = matrix_to_json(report.cost_samples);
  return out;
}

dr::DRConfig dr_config_from_json(const json& node) {
  const std::string what = "dr-config";
  if (!node.is_object()) bad(what, "the experiment config must be an object");
  dr::DRConfig config;
  config.agents = static_cast<long>(number_field(node, "M", what));
  config.horizon = static_cast<long>(number_field(node, "T", what));
  if (node.contains("N")) config.n_samples = static_cast<long>(number_field(node, "N", what));
  config.beta = number_field(node, "beta", what);
  if (node.contains("alpha")) config.alpha_coef = number_field(node, "alpha", what);
  if (node.contains("beta_price")) config.beta_coef = number_field(node, "beta_price", what);
  if (node.contains("cap")) config.cap = number_field(node, "cap", what);
  if (const auto it = node.find("gamma_law"); it != node.end()) {
    config.energy_law.mean = number_field(*it, "mean", what + ".gamma_law");
    config.energy_law.sd = number_field(*it, "sd", what + ".gamma_law");
    config.energy_law.lo = number_field(*it, "lo", what + ".gamma_law");
    config.energy_law.hi = number_field(*it, "hi", what + ".gamma_law");
  }
  const json& data = field(node, "data", what);
  config.data.type = field(data, "type", what + ".data").get<std::string>();
  if (config.data.type == "gaussian") {
    config.data.path = field(data, "source_csv", what + ".data").get<std::string>();
  } else if (config.data.type == "csv") {
    config.data.path = field(data, "path", what + ".data").get<std::string>();
  } else {
    bad(what, "data.type must be \"csv\" or \"gaussian\"");
  }
  if (node.contains("seed")) config.seed = node["seed"].get<std::uint64_t>();
  if (node.contains("mc_samples")) {
    config.mc_samples = static_cast<long>(number_field(node, "mc_samples", what));
  }
  if (node.contains("damping")) config.damping = number_field(node, "damping", what);
  if (node.contains("comparison_tol")) {
    config.comparison_tol = number_field(node, "comparison_tol", what);
  }
  return config;
}

}  // namespace svi::cli
