#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "svi/demand_response.hpp"
#include "svi/risk_lab.hpp"
#include "svi/scenario_bounds.hpp"
#include "svi/support_analysis.hpp"
#include "svi/types.hpp"
#include "svi/vi_solver.hpp"

namespace svi::cli {

// All tool output uses insertion-ordered JSON so emitted documents are
// byte-stable for a given run configuration.
using json = nlohmann::ordered_json;

// ---- primitive conversions -------------------------------------------------
json vector_to_json(const Vector& v);
json matrix_to_json(const Matrix& m);
Vector vector_from_json(const json& node, const std::string& what);
Matrix matrix_from_json(const json& node, const std::string& what);

// ---- set / problem parsing ---------------------------------------------------
// {"halfspaces":[{"a":[...],"b":v}], "box":{"l":[...],"u":[...]},
//  "quadratics":[{"Q":[[...]],"c":[...],"b":v}]}; every key optional.
convex_sets::ConvexSet set_from_json(const json& node, int dim, const std::string& what);

// {"operator": {"type":"affine","A":[[...]],"b":[...]} |
//              {"type":"game","game":{"M":...,"dims":[...],
//               "cost_model":"demand_response"|"affine_quadratic", ...}},
//  "base": set, "scenarios": [set, ...]}
// With `qvi`, scenario sets are installed as anchor-independent set maps and
// the problem solves through the anchored fixed-point loop.
vi::ScenarioVIProblem problem_from_json(const json& node, bool qvi);

// ---- result serialization -----------------------------------------------------
json certificate_to_json(const scenario_bounds::Certificate& cert);
json solution_to_json(const vi::Solution& solution);
json support_report_to_json(const support::SupportReport& report);
json risk_estimate_to_json(const risk::RiskEstimate& estimate);
json coverage_to_json(const risk::CoverageResult& result);
json dr_report_to_json(const dr::DRReport& report);
std::string check_outcome_name(support::CheckOutcome outcome);

// ---- experiment configs -------------------------------------------------------
// {"M":..,"T":..,"N":..,"beta":..,"alpha":..,"beta_price":..,"cap":..,
//  "gamma_law":{"mean":..,"sd":..,"lo":..,"hi":..},
//  "data":{"type":"csv","path":..} | {"type":"gaussian","source_csv":..},
//  optional "seed","mc_samples","damping","comparison_tol"}
dr::DRConfig dr_config_from_json(const json& node);

}  // namespace svi::cli
