#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svi/rng.hpp"
#include "svi/scenario_bounds.hpp"
#include "svi/types.hpp"
#include "svi/vi_solver.hpp"

namespace svi::risk {

struct RiskEstimate {
  double value = 0.0;
  std::string method;  // "monte-carlo" or "gaussian-closed-form"
  double ci_low = 0.0;
  double ci_high = 1.0;
  long samples_used = 0;
  std::uint64_t seed = 0;
};

// Violation probability of `predicate` under `sampler`, estimated from
// num_samples independent draws with a 95% Clopper-Pearson interval. Draws
// are generated in fixed-size batches, one counter-based substream per batch,
// so the estimate does not depend on thread scheduling. Requires
// num_samples >= 100.
RiskEstimate mc_risk(const std::function<bool(const Vector&)>& predicate,
                     const std::function<Vector(Philox&)>& sampler, long num_samples,
                     std::uint64_t seed);

// P{a'delta > threshold} for delta ~ N(mu, Sigma), exactly. Throws
// Error("non-psd-covariance") when Sigma has a clearly negative eigenvalue.
// A degenerate direction (a'Sigma a = 0) resolves to 0 or 1 by the mean.
RiskEstimate gaussian_linear_risk(const Vector& a, double threshold, const Vector& mu,
                                  const Matrix& Sigma);

// End-to-end check of the certificate machinery on a one-dimensional problem
// with a known violation probability: scenarios delta ~ U[0, 2] upper-bound
// the decision, the operator pushes toward 1, so the solution is
// min(1, min delta) and its violation probability is exactly solution / 2.
// Each trial solves the sampled problem, counts support scenarios, evaluates
// the posterior bound at that count, and compares with the exact probability.
struct CoverageConfig {
  long trials = 200;
  long n_samples = 50;
  double beta = 0.05;
  std::uint64_t seed = 0;
  double comparison_tol = 1e-9;  // support classification displacement threshold
};

struct TrialRow {
  long trial = 0;
  long s_star = 0;
  double epsilon = 0.0;   // posterior bound at s_star
  double exact_risk = 0.0;
  double x_star = 0.0;
  bool violated = false;  // exact risk exceeded the bound
  bool excluded = false;  // ambiguous support classification or failed solve
};

struct CoverageResult {
  long trials = 0;      // attempted
  long excluded = 0;    // not counted in the rate
  long violations = 0;
  double beta = 0.0;
  double empirical_rate = 0.0;  // violations / (trials - excluded)
  std::vector<long> s_star_histogram;  // counted trials only, index = support count
  std::vector<TrialRow> rows;          // one per attempted trial
};

CoverageResult coverage_experiment(const CoverageConfig& config);

}  // namespace svi::risk
