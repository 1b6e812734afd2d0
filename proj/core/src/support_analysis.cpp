#include "svi/support_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svi/errors.hpp"
#include "svi/parallel.hpp"

namespace svi::support {

namespace {

vi::Solution masked_solve(const vi::ScenarioVIProblem& problem, const vi::SolverParams& params,
                          const Vector& warm, const std::vector<char>& mask) {
  vi::SolverParams local = params;
  local.start = warm;
  local.qvi_compute_residual = false;  // the displacement is the only output used
  return vi::solve(problem, local, &mask);
}

}  // namespace

SupportReport count_support(const vi::ScenarioVIProblem& problem, const vi::SolverParams& params,
                            double comparison_tol) {
  if (!(comparison_tol > 0.0)) {
    throw InvalidQueryError("comparison tolerance must be positive");
  }
  const long count = static_cast<long>(problem.scenario_count());

  SupportReport report;
  report.comparison_tol = comparison_tol;
  report.base = vi::solve(problem, params);
  report.x_star = report.base.x;
  report.displacement.assign(static_cast<std::size_t>(count), 0.0);

  std::vector<char> converged(static_cast<std::size_t>(count), 1);
  parallel_for(count, [&](long i) {
    std::vector<char> mask(static_cast<std::size_t>(count), 1);
    mask[static_cast<std::size_t>(i)] = 0;
    const vi::Solution removed = masked_solve(problem, params, report.x_star, mask);
    report.displacement[static_cast<std::size_t>(i)] = (removed.x - report.x_star).norm();
    converged[static_cast<std::size_t>(i)] = removed.converged ? 1 : 0;
  });

  report.valid = report.base.converged &&
                 std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
  for (long i = 0; i < count; ++i) {
    const double d = report.displacement[static_cast<std::size_t>(i)];
    if (d > comparison_tol) {
      report.support_indices.push_back(static_cast<int>(i));
      report.min_support_displacement = std::min(report.min_support_displacement, d);
    } else {
      report.max_nonsupport_displacement = std::max(report.max_nonsupport_displacement, d);
    }
    if (d >= comparison_tol / 10.0 && d <= comparison_tol * 10.0) {
      report.unresolved_indices.push_back(static_cast<int>(i));
    }
  }
  report.s_star = static_cast<long>(report.support_indices.size());
  report.ambiguous = !report.unresolved_indices.empty();
  return report;
}

CheckOutcome check_degeneracy(const vi::ScenarioVIProblem& problem, SupportReport& report,
                              const vi::SolverParams& params) {
  const long count = static_cast<long>(problem.scenario_count());
  if (report.x_star.size() != problem.dim()) {
    throw DimensionMismatchError("report does not match the problem dimension");
  }
  std::vector<char> mask(static_cast<std::size_t>(count), 0);
  for (int idx : report.support_indices) {
    if (idx < 0 || idx >= count) {
      throw InvalidQueryError("support index " + std::to_string(idx) + " out of range");
    }
    mask[static_cast<std::size_t>(idx)] = 1;
  }
  const vi::Solution kept = masked_solve(problem, params, report.x_star, mask);
  const double moved = (kept.x - report.x_star).norm();
  report.degeneracy_check =
      (kept.converged && moved <= report.comparison_tol) ? CheckOutcome::passed
                                                         : CheckOutcome::failed;
  return report.degeneracy_check;
}

void assert_dimension_bound(const SupportReport& report, long bound, bool scenarios_convex) {
  if (!scenarios_convex) return;
  if (report.s_star > bound) {
    throw Error("dimension-bound-violated",
                "support count " + std::to_string(report.s_star) +
                    " exceeds the structural bound " + std::to_string(bound));
  }
}

}  // namespace svi::support
