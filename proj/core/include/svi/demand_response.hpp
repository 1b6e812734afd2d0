#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svi/games.hpp"
#include "svi/risk_lab.hpp"
#include "svi/scenario_bounds.hpp"
#include "svi/support_analysis.hpp"
#include "svi/types.hpp"

namespace svi::dr {

// ---------------------------------------------------------------------------
// Demand-profile data handling
// ---------------------------------------------------------------------------

// Plain CSV, one profile per row, comma-separated nonnegative numbers, no
// header. Throws ParseError("parse-error") on malformed numbers,
// Error("negative-demand") on negative entries, and
// Error("inconsistent-width") when rows disagree on the horizon.
std::vector<Vector> load_profiles(const std::string& path);
void save_profiles(const std::string& path, const std::vector<Vector>& profiles);

struct GaussianModel {
  Vector mu;
  Matrix Sigma;            // symmetric positive semidefinite (ridge included)
  double ridge_used = 0.0;
};

// Sample mean and unbiased sample covariance of the rows, plus ridge * I for
// numerical floor; ridge < 0 picks a small automatic value proportional to
// the average variance. Needs at least two rows.
GaussianModel fit_gaussian(const std::vector<Vector>& profiles, double ridge = -1.0);

// Draws `count` profiles from the model (one counter-based substream per
// profile), clipping negative coordinates to zero. The fraction of clipped
// coordinates lands in *clip_fraction when given.
std::vector<Vector> sample_profiles(const GaussianModel& model, long count, std::uint64_t seed,
                                    double* clip_fraction = nullptr);

// ---------------------------------------------------------------------------
// The consumption game
// ---------------------------------------------------------------------------

// M agents schedule consumption over T slots. Agent j pays
//   J_j(x; d) = sum_t (alpha_t * sigma_t(x) + beta_t * d_t) * x_jt,
// where sigma_t is the total consumption of all agents in slot t and d the
// (uncertain) inflexible demand profile. The local set of each agent is the
// box 0 <= x_jt <= cap_t together with the energy requirement
// sum_t x_jt = energy_j.
struct DRGameConfig {
  long agents = 0;
  long horizon = 0;
  Vector alpha;       // length T, strictly positive
  Vector beta_price;  // length T
  Vector energy;      // length M, each within [0, sum(cap)]
  Vector cap;         // length T, strictly positive
};

// The stacked own-gradient map of this game is strongly monotone with
// modulus min_t alpha_t and Lipschitz with constant (M + 1) * max_t alpha_t;
// both are declared on the returned spec, and the exact best-response
// ingredients (own-block Hessian, polyhedral local sets) are installed.
games::GameSpec build_dr_game(const DRGameConfig& config);

// ---------------------------------------------------------------------------
// End-to-end experiment
// ---------------------------------------------------------------------------

struct TruncatedGaussian {
  double mean = 4.8;
  double sd = 1.2;
  double lo = 4.0;
  double hi = 5.6;
};

struct DRDataSpec {
  // "gaussian": fit a model to the CSV at `path`, then draw n_samples
  // synthetic scenario profiles. "csv": use the CSV rows directly as the
  // scenarios (n_samples follows the row count) and fit the model to the
  // same rows for the closed-form risk evaluation.
  std::string type = "gaussian";
  std::string path;
};

struct DRConfig {
  long agents = 5;
  long horizon = 24;
  long n_samples = 100;
  double beta = 0.05;       // certificate confidence parameter
  double alpha_coef = 1.0;  // price sensitivity, every slot
  double beta_coef = 1.0;   // inflexible-demand coupling, every slot
  double cap = 1.0;         // per-slot consumption cap
  TruncatedGaussian energy_law{};  // per-agent total energy requirement
  DRDataSpec data{};
  std::uint64_t seed = 0;
  long mc_samples = 1'000'000;  // aggregate violation check
  double damping = -1.0;        // <0: automatic min(0.5, 3.6 / (agents + 1))
  double comparison_tol = 1e-6; // support classification threshold
};

struct DRReport {
  DRConfig config;
  // data stage
  GaussianModel model;
  double clip_fraction = 0.0;
  Vector energy;  // drawn per-agent requirements
  // equilibrium stage
  Vector x_sr;  // agents * horizon, agent-major
  Vector t_sr;  // per-agent worst-case cost over the sampled scenarios
  Vector sigma_profile;  // per-slot total consumption at x_sr
  double br_gap = 0.0;
  bool equilibrium_converged = false;
  // support stage (on the lifted anchor problem)
  long s_star = 0;
  std::vector<int> support_indices;
  support::CheckOutcome degeneracy = support::CheckOutcome::skipped;
  bool support_ambiguous = false;
  // certificates
  scenario_bounds::Certificate posterior;  // at the counted support size
  scenario_bounds::Certificate prior;      // at the structural bound dims + agents
  // risk stage
  std::vector<double> agent_risk;  // closed-form violation probability per agent
  double max_agent_risk = 0.0;
  bool certified = false;          // max closed-form risk <= posterior bound
  risk::RiskEstimate aggregate_mc; // P{any agent above its threshold}
  // per-agent worst-case decomposition: cost of agent j under scenario i
  Matrix cost_samples;  // agents x n_samples
};

// Full pipeline: data -> game -> equilibrium -> support count on the lifted
// problem -> certificates -> closed-form and Monte Carlo risk. Errors are
// tagged with the stage they escaped from.
DRReport run_dr_experiment(const DRConfig& config);

}  // namespace svi::dr
