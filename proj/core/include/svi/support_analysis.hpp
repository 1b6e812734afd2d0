#pragma once

#include <limits>
#include <vector>

#include "svi/types.hpp"
#include "svi/vi_solver.hpp"

namespace svi::support {

enum class CheckOutcome { skipped, passed, failed };

// Classification of the sampled constraints by the leave-one-out probe: a
// scenario supports the solution when removing it moves the solution by more
// than comparison_tol. Displacements landing inside the audit band around the
// threshold ([tol/10, 10*tol]) are flagged unresolved — the count is then
// untrustworthy and certificates built from it should be treated as suspect.
struct SupportReport {
  long s_star = 0;
  std::vector<int> support_indices;     // ascending scenario indices (0-based)
  std::vector<int> unresolved_indices;  // displacements inside the audit band
  std::vector<double> displacement;     // per-scenario |x_without_i - x_star|_2
  double comparison_tol = 0.0;
  double min_support_displacement = std::numeric_limits<double>::infinity();
  double max_nonsupport_displacement = 0.0;
  bool ambiguous = false;  // any unresolved index
  bool valid = false;      // base solve and every re-solve converged
  CheckOutcome degeneracy_check = CheckOutcome::skipped;
  Vector x_star;
  vi::Solution base;
};

// Solves the full problem, then re-solves once per scenario with that
// scenario removed (warm-started at the full solution) and classifies each
// scenario by the displacement of the re-solved point.
SupportReport count_support(const vi::ScenarioVIProblem& problem,
                            const vi::SolverParams& params = {}, double comparison_tol = 1e-6);

// Re-solves keeping only the support scenarios of `report`; the outcome is
// `passed` when the solution lands back on x_star (within comparison_tol),
// `failed` otherwise. Updates report.degeneracy_check and returns the outcome.
CheckOutcome check_degeneracy(const vi::ScenarioVIProblem& problem, SupportReport& report,
                              const vi::SolverParams& params = {});

// For problems whose scenario sets are convex, a nondegenerate support count
// cannot exceed the bound (the variable dimension, or dimension plus agent
// count in epigraph form). Throws Error("dimension-bound-violated") when the
// report exceeds it; no-op when convexity does not hold.
void assert_dimension_bound(const SupportReport& report, long bound, bool scenarios_convex);

}  // namespace svi::support
