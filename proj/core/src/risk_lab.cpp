#include "svi/risk_lab.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>

#include "svi/errors.hpp"
#include "svi/parallel.hpp"
#include "svi/special_functions.hpp"
#include "svi/support_analysis.hpp"

namespace svi::risk {

namespace {
constexpr long kBatch = 4096;
}

RiskEstimate mc_risk(const std::function<bool(const Vector&)>& predicate,
                     const std::function<Vector(Philox&)>& sampler, long num_samples,
                     std::uint64_t seed) {
  if (!predicate || !sampler) throw InvalidQueryError("predicate and sampler are required");
  if (num_samples < 100) {
    throw InvalidQueryError("a violation-probability estimate needs at least 100 samples");
  }
  const long batches = (num_samples + kBatch - 1) / kBatch;
  std::vector<long> hits(static_cast<std::size_t>(batches), 0);
  parallel_for(batches, [&](long b) {
    Philox gen(seed, static_cast<std::uint64_t>(b));
    const long lo = b * kBatch;
    const long hi = std::min(num_samples, lo + kBatch);
    long count = 0;
    for (long i = lo; i < hi; ++i) {
      if (predicate(sampler(gen))) ++count;
    }
    hits[static_cast<std::size_t>(b)] = count;
  });
  long total = 0;
  for (long h : hits) total += h;

  RiskEstimate est;
  est.method = "monte-carlo";
  est.value = static_cast<double>(total) / static_cast<double>(num_samples);
  est.samples_used = num_samples;
  est.seed = seed;
  const auto [lo, hi] = clopper_pearson(total, num_samples, 0.95);
  est.ci_low = lo;
  est.ci_high = hi;
  return est;
}

RiskEstimate gaussian_linear_risk(const Vector& a, double threshold, const Vector& mu,
                                  const Matrix& Sigma) {
  const long n = a.size();
  if (mu.size() != n || Sigma.rows() != n || Sigma.cols() != n) {
    throw DimensionMismatchError("direction, mean and covariance must agree on the dimension");
  }
  const Matrix sym = 0.5 * (Sigma + Sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw Error("non-psd-covariance", "covariance has a negative eigenvalue");
  }
  const double mean = a.dot(mu);
  const double variance = std::max(0.0, a.dot(sym * a));

  RiskEstimate est;
  est.method = "gaussian-closed-form";
  if (variance <= 0.0) {
    est.value = mean > threshold ? 1.0 : 0.0;
  } else {
    est.value = normal_sf((threshold - mean) / std::sqrt(variance));
  }
  est.ci_low = est.value;
  est.ci_high = est.value;
  return est;
}

CoverageResult coverage_experiment(const CoverageConfig& config) {
  if (config.trials < 1) throw InvalidQueryError("at least one trial is required");
  if (config.n_samples < 1) throw InvalidQueryError("at least one scenario per trial is required");
  if (!(config.beta > 0.0 && config.beta < 1.0)) {
    throw InvalidQueryError("the confidence parameter must lie in (0, 1)");
  }

  // Posterior bound for every possible support count, shared by all trials.
  const std::vector<double> eps = scenario_bounds::epsilon_table(config.n_samples, config.beta);

  CoverageResult result;
  result.trials = config.trials;
  result.beta = config.beta;
  result.rows.assign(static_cast<std::size_t>(config.trials), TrialRow{});

  parallel_for(config.trials, [&](long trial) {
    TrialRow row;
    row.trial = trial;

    Philox gen(config.seed, static_cast<std::uint64_t>(trial));
    std::vector<double> delta(static_cast<std::size_t>(config.n_samples));
    for (double& d : delta) d = gen.uniform(0.0, 2.0);

    vi::ScenarioVIProblem problem;
    problem.op.dim = 1;
    problem.op.eval = [](const Vector& x) { return Vector::Constant(1, x[0] - 1.0); };
    problem.op.strong_monotonicity = 1.0;
    problem.op.lipschitz = 1.0;
    problem.base = convex_sets::ConvexSet(1);
    problem.base.add_box(Vector::Constant(1, -10.0), Vector::Constant(1, 10.0));
    problem.scenarios.reserve(delta.size());
    for (double d : delta) {
      convex_sets::ConvexSet cut(1);
      cut.add_halfspace(Vector::Ones(1), d);
      problem.scenarios.push_back(std::move(cut));
    }

    vi::SolverParams params;
    params.tol = 1e-12;
    const support::SupportReport report =
        support::count_support(problem, params, config.comparison_tol);

    row.s_star = report.s_star;
    row.x_star = report.x_star[0];
    row.exact_risk = std::clamp(row.x_star, 0.0, 2.0) / 2.0;
    row.epsilon = eps[static_cast<std::size_t>(std::min<long>(row.s_star, config.n_samples))];
    row.violated = row.exact_risk > row.epsilon;
    row.excluded = report.ambiguous || !report.valid;
    result.rows[static_cast<std::size_t>(trial)] = row;
  });

  result.s_star_histogram.assign(static_cast<std::size_t>(config.n_samples) + 1, 0);
  long counted = 0;
  for (const TrialRow& row : result.rows) {
    if (row.excluded) {
      ++result.excluded;
      continue;
    }
    ++counted;
    if (row.violated) ++result.violations;
    ++result.s_star_histogram[static_cast<std::size_t>(row.s_star)];
  }
  result.empirical_rate =
      counted > 0 ? static_cast<double>(result.violations) / static_cast<double>(counted) : 0.0;
  return result;
}

}  // namespace svi::risk
