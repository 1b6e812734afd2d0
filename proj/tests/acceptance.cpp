// Release gate. Runs every end-to-end acceptance criterion of the toolkit,
// prints one [PASS]/[FAIL] line per criterion with its wall-clock time, and
// exits nonzero when any criterion fails. Each criterion also carries a time
// budget; blowing the budget is a failure even when the checks pass.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/instances.hpp"
#include "support/oracles.hpp"
#include "svi/convex_sets.hpp"
#include "svi/demand_response.hpp"
#include "svi/errors.hpp"
#include "svi/games.hpp"
#include "svi/risk_lab.hpp"
#include "svi/rng.hpp"
#include "svi/scenario_bounds.hpp"
#include "svi/special_functions.hpp"
#include "svi/support_analysis.hpp"
#include "svi/vi_solver.hpp"
#include "svicli/dispatch.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using svi::Matrix;
using svi::Vector;

struct Checker {
  std::vector<std::string> failures;

  void require(bool condition, const std::string& what) {
    if (!condition) failures.push_back(what);
  }
  template <typename... Args>
  void requiref(bool condition, const char* format, Args... args) {
    if (condition) return;
    char buffer[512];
    std::snprintf(buffer, sizeof(buffer), format, args...);
    failures.emplace_back(buffer);
  }
};

struct ScratchDir {
  fs::path dir;
  explicit ScratchDir(const std::string& tag) {
    dir = fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string file(const std::string& name) const { return (dir / name).string(); }
  std::string write(const std::string& name, const std::string& contents) const {
    const auto path = file(name);
    std::ofstream stream(path, std::ios::binary);
    stream << contents;
    return path;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct CliRun {
  int exit_code = 0;
  std::string out;
  std::string err;
};

CliRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun run;
  run.exit_code = svi::cli::dispatch(args, out, err);
  run.out = out.str();
  run.err = err.str();
  return run;
}

std::string repo_path(const std::string& relative) {
  return std::string(SVI_REPO_ROOT) + "/" + relative;
}

// ---------------------------------------------------------------------------
// 1. The flagship certificate from the command line.
// ---------------------------------------------------------------------------
void criterion_certificate_cli(Checker& c) {
  const auto run = run_cli({"certify", "--k", "7", "--n-samples", "500", "--beta", "1e-6"});
  c.requiref(run.exit_code == 0, "exit code %d, expected 0", run.exit_code);
  if (run.exit_code != 0) return;
  const json payload = json::parse(run.out);
  const double epsilon = payload.at("epsilon").get<double>();
  c.requiref(std::abs(epsilon - 0.0649) <= 5e-4,
             "epsilon = %.6f, expected 0.0649 within 0.0005", epsilon);
}

// ---------------------------------------------------------------------------
// 2. Bound tables across sample sizes, against an independent root finder.
// ---------------------------------------------------------------------------
void criterion_bound_tables(Checker& c) {
  namespace sb = svi::scenario_bounds;
  const struct {
    long n;
    double beta;
  } cases[] = {{50, 0.05}, {500, 1e-6}, {1000, 0.2}};

  for (const auto& [n, beta] : cases) {
    const std::vector<double> table = sb::epsilon_table(n, beta);
    c.requiref(static_cast<long>(table.size()) == n + 1,
               "N=%ld: table has %zu entries, expected %ld", n, table.size(), n + 1);
    for (std::size_t k = 1; k < table.size(); ++k) {
      if (table[k] + 1e-15 < table[k - 1]) {
        c.requiref(false, "N=%ld beta=%g: epsilon(%zu) < epsilon(%zu)", n, beta, k, k - 1);
        break;
      }
    }
    c.requiref(table.back() == 1.0, "N=%ld: epsilon(N) = %.17g, expected exactly 1", n,
               table.back());
    c.requiref(sb::epsilon({n + 5, n, beta}) == 1.0, "N=%ld: epsilon(k > N) must be 1", n);

    double max_residual = 0.0;
    double max_gap = 0.0;
    for (long k = 0; k < n; ++k) {
      const auto cert = sb::certify(k, n, beta);
      max_residual = std::max(max_residual, cert.residual);
      const long double reference = oracles::certificate_root(k, n, beta, 1e-13L);
      max_gap = std::max(max_gap, std::abs(cert.t_value - static_cast<double>(reference)));
      if (std::abs(cert.epsilon - table[static_cast<std::size_t>(k)]) > 1e-14) {
        c.requiref(false, "N=%ld k=%ld: table and certify disagree", n, k);
      }
    }
    c.requiref(max_residual <= 1e-10, "N=%ld beta=%g: max residual %.3e exceeds 1e-10", n, beta,
               max_residual);
    c.requiref(max_gap <= 1e-9, "N=%ld beta=%g: max gap to reference roots %.3e exceeds 1e-9", n,
               beta, max_gap);
  }
}

// ---------------------------------------------------------------------------
// 3. Random affine problems against exhaustive complementarity enumeration.
// ---------------------------------------------------------------------------
void criterion_affine_vs_enumeration(Checker& c) {
  svi::Philox gen(20260301, 0);
  svi::vi::SolverParams params;
  params.tol = 1e-10;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(gen.next_u64() % 3);
    const long rows = 1 + static_cast<long>(gen.next_u64() % 6);
    const auto instance = instances::random_affine_instance(gen, dim, rows);

    Vector reference;
    const bool enumerated = oracles::affine_vi_by_enumeration(instance.K, instance.m, instance.A,
                                                              instance.b, &reference);
    c.requiref(enumerated, "trial %d: enumeration found no consistent pattern", trial);
    if (!enumerated) continue;

    const auto sol = svi::vi::solve(instance.problem, params);
    c.requiref(sol.converged, "trial %d: solver did not converge", trial);
    const double gap = (sol.x - reference).cwiseAbs().maxCoeff();
    c.requiref(gap <= 1e-6, "trial %d: |x - enumerated| = %.3e exceeds 1e-6", trial, gap);
  }
}

// ---------------------------------------------------------------------------
// 4. Support counts on random convex problems never exceed the dimension.
// ---------------------------------------------------------------------------
void criterion_support_dimension_bound(Checker& c) {
  svi::Philox gen(20260302, 0);
  svi::vi::SolverParams params;
  params.tol = 1e-10;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 1 + static_cast<int>(gen.next_u64() % 4);
    const long rows = 1 + static_cast<long>(gen.next_u64() % 30);
    const auto instance = instances::random_affine_instance(gen, dim, rows);

    const auto report = svi::support::count_support(instance.problem, params, 1e-6);
    c.requiref(report.valid, "trial %d: a leave-one-out solve failed", trial);
    c.requiref(!report.ambiguous, "trial %d: ambiguous support classification", trial);
    c.requiref(report.s_star <= dim, "trial %d: s* = %ld exceeds dimension %d", trial,
               report.s_star, dim);
    try {
      svi::support::assert_dimension_bound(report, dim, true);
    } catch (const svi::Error& e) {
      c.requiref(false, "trial %d: dimension bound assertion threw: %s", trial, e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// 5. Coverage experiment: the certified bound holds at its stated confidence.
// ---------------------------------------------------------------------------
void criterion_coverage(Checker& c) {
  svi::risk::CoverageConfig config;
  config.trials = 200;
  config.n_samples = 50;
  config.beta = 0.05;
  config.seed = 0;
  const auto result = svi::risk::coverage_experiment(config);

  const long counted = result.trials - result.excluded;
  c.requiref(counted >= 150, "only %ld of %ld trials were counted", counted, result.trials);
  // beta + 3 standard errors of a Bernoulli(beta) mean over 200 trials
  const double cap = 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 200.0);
  c.requiref(result.empirical_rate <= cap, "empirical violation rate %.4f exceeds %.4f",
             result.empirical_rate, cap);
}

// ---------------------------------------------------------------------------
// 6. Degeneracy audit: catches the overlap layout, passes the nested one.
// ---------------------------------------------------------------------------
void criterion_degeneracy_audit(Checker& c) {
  using svi::support::CheckOutcome;
  {
    const auto problem = instances::degenerate_overlap_instance();
    auto report = svi::support::count_support(problem);
    const auto outcome = svi::support::check_degeneracy(problem, report);
    c.require(outcome == CheckOutcome::failed,
              "the overlapping-constraint layout was not flagged as degenerate");
  }
  {
    const auto problem = instances::nested_halfspace_instance();
    auto report = svi::support::count_support(problem);
    const auto outcome = svi::support::check_degeneracy(problem, report);
    c.require(outcome == CheckOutcome::passed, "the nested-halfspace layout failed the audit");
  }
}

// ---------------------------------------------------------------------------
// 7. Desk-scale consumption game: equilibrium quality and route agreement.
// ---------------------------------------------------------------------------
void criterion_desk_game(Checker& c) {
  const auto desk = instances::desk_game(5, 24, 100, 424242);
  const long T = desk.config.horizon;
  const int agents = desk.game.agents();

  const auto eq = svi::games::solve_sampled_robust_eq(desk.game, desk.samples);
  c.require(eq.converged, "the equilibrium iteration did not converge");
  if (!eq.converged) return;

  // t_sr must equal each agent's worst-case cost at the equilibrium.
  for (int j = 0; j < agents; ++j) {
    const auto wc = svi::games::worst_case_cost(desk.game, desk.samples, eq.x_sr, j);
    c.requiref(std::abs(wc.value - eq.t_sr[j]) <= 1e-6,
               "agent %d: t_sr and the worst-case cost differ by %.3e", j,
               std::abs(wc.value - eq.t_sr[j]));
  }

  // No unilateral feasible deviation improves an agent's worst-case cost.
  svi::Philox dev_gen(8675309, 0);
  for (int j = 0; j < agents; ++j) {
    svi::convex_sets::ConvexSet dev_set(static_cast<int>(T));
    dev_set.add_box(Vector::Zero(T), desk.config.cap);
    dev_set.add_halfspace(Vector::Ones(T), desk.config.energy[j]);
    dev_set.add_halfspace(-Vector::Ones(T), -desk.config.energy[j]);

    int improvements = 0;
    double best_drop = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Vector probe(T);
      for (long t = 0; t < T; ++t) probe[t] = dev_gen.uniform(0.0, desk.config.cap[t]);
      const Vector block = dev_set.project(probe);
      Vector x_dev = eq.x_sr;
      x_dev.segment(desk.game.offset(j), T) = block;
      const auto wc = svi::games::worst_case_cost(desk.game, desk.samples, x_dev, j);
      if (wc.value < eq.t_sr[j] - 1e-6) {
        ++improvements;
        best_drop = std::max(best_drop, eq.t_sr[j] - wc.value);
      }
    }
    c.requiref(improvements == 0, "agent %d: %d of 50 deviations improved by up to %.3e", j,
               improvements, best_drop);
  }

  // The lifted epigraph route must land on the same equilibrium.
  const auto lifted = svi::games::build_epigraph_qvi(desk.game, desk.samples);
  const auto sol = svi::vi::solve(lifted);
  c.require(sol.converged, "the lifted epigraph solve did not converge");
  if (!sol.converged) return;
  const long dim = desk.game.dim();
  const double x_gap = (sol.x.head(dim) - eq.x_sr).cwiseAbs().maxCoeff();
  const double t_gap = (sol.x.tail(agents) - eq.t_sr).cwiseAbs().maxCoeff();
  c.requiref(x_gap <= 1e-5, "routes disagree on x by %.3e (tolerance 1e-5)", x_gap);
  c.requiref(t_gap <= 1e-5, "routes disagree on t by %.3e (tolerance 1e-5)", t_gap);
}

// ---------------------------------------------------------------------------
// 8. Closed-form Gaussian risk against large Monte Carlo estimates.
// ---------------------------------------------------------------------------
void criterion_gaussian_vs_mc(Checker& c) {
  svi::Philox gen(20260303, 0);
  const long draws = 1'000'000;
  for (int config = 0; config < 20; ++config) {
    const long dim = 1 + static_cast<long>(gen.next_u64() % 4);
    Vector a(dim), mu(dim);
    Matrix G(dim, dim);
    for (long i = 0; i < dim; ++i) {
      a[i] = gen.uniform(-1.0, 1.0);
      mu[i] = gen.uniform(-1.0, 1.0);
      for (long j = 0; j < dim; ++j) G(i, j) = gen.uniform(-0.7, 0.7);
    }
    const Matrix Sigma = G.transpose() * G + 0.05 * Matrix::Identity(dim, dim);
    const double sd = std::sqrt((a.transpose() * Sigma * a).value());
    const double threshold = a.dot(mu) + gen.uniform(-1.5, 1.5) * sd;

    const auto exact = svi::risk::gaussian_linear_risk(a, threshold, mu, Sigma);
    const Matrix L = Sigma.llt().matrixL();
    const auto estimate = svi::risk::mc_risk(
        [&](const Vector& delta) { return a.dot(delta) > threshold; },
        [&](svi::Philox& rng) {
          Vector z(dim);
          for (long t = 0; t < dim; ++t) z[t] = rng.normal();
          return Vector(mu + L * z);
        },
        draws, 1000 + static_cast<std::uint64_t>(config));

    // Exact binomial band around the Monte Carlo count, wide enough that a
    // clean implementation fails any single configuration with probability
    // well below 1e-4.
    const long hits = std::lround(estimate.value * static_cast<double>(estimate.samples_used));
    const auto [lo, hi] = svi::clopper_pearson(hits, estimate.samples_used, 0.9999);
    c.requiref(lo <= exact.value && exact.value <= hi,
               "config %d: closed form %.6f outside the binomial band [%.6f, %.6f]", config,
               exact.value, lo, hi);
  }
}

// ---------------------------------------------------------------------------
// 9. Full experiment pipeline certifies the per-agent risk across seeds.
// ---------------------------------------------------------------------------
void criterion_experiment_certification(Checker& c) {
  svi::dr::DRConfig config;
  config.agents = 5;
  config.horizon = 24;
  config.n_samples = 100;
  config.beta = 0.05;
  config.data.type = "gaussian";
  config.data.path = repo_path("configs/demo_profiles.csv");
  config.mc_samples = 500;

  const int seeds = 100;
  int certified = 0;
  int failures = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    config.seed = static_cast<std::uint64_t>(seed);
    try {
      const auto report = svi::dr::run_dr_experiment(config);
      if (report.certified) ++certified;
    } catch (const std::exception& e) {
      if (++failures <= 3) c.requiref(false, "seed %d: experiment threw: %s", seed, e.what());
    }
  }
  c.requiref(failures == 0, "%d of %d experiment runs threw", failures, seeds);
  c.requiref(certified >= 95, "closed-form risk certified in only %d of %d seeds (need 95)",
             certified, seeds);
}

// ---------------------------------------------------------------------------
// 10. Seeded command-line workflows are byte-identical across reruns.
// ---------------------------------------------------------------------------
void criterion_byte_determinism(Checker& c) {
  ScratchDir scratch("svi_acceptance");

  const char* wedge = R"({
    "operator": {"type": "affine", "A": [[1.0, 0.0], [0.0, 1.0]], "b": [-2.0, -1.0]},
    "scenarios": [
      {"halfspaces": [{"a": [1.0, 0.0], "b": 0.0}]},
      {"halfspaces": [{"a": [0.0, 1.0], "b": 0.0}]},
      {"halfspaces": [{"a": [1.0, 1.0], "b": 0.0}]}
    ]
  })";
  const auto problem = scratch.write("wedge.json", wedge);

  const json risk_config = {{"a", {1.0, -0.5}},
                            {"threshold", 0.5},
                            {"mu", {0.1, 0.2}},
                            {"Sigma", {{1.0, 0.2}, {0.2, 0.5}}},
                            {"samples", 20000}};
  const auto risk_path = scratch.write("risk.json", risk_config.dump());

  std::string profiles;
  for (int r = 0; r < 8; ++r) {
    for (int t = 0; t < 4; ++t) {
      profiles += std::to_string(2.0 + 0.4 * t + 0.1 * ((r + t) % 3));
      profiles += (t == 3) ? '\n' : ',';
    }
  }
  const auto profiles_path = scratch.write("profiles.csv", profiles);
  const json dr_config = {{"M", 2},
                          {"T", 4},
                          {"N", 10},
                          {"beta", 0.1},
                          {"gamma_law", {{"mean", 1.5}, {"sd", 0.4}, {"lo", 1.0}, {"hi", 2.0}}},
                          {"data", {{"type", "gaussian"}, {"source_csv", profiles_path}}},
                          {"seed", 3},
                          {"mc_samples", 400}};
  const auto dr_path = scratch.write("dr.json", dr_config.dump());

  struct Workflow {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> side_files;  // appended to args by the runner
  };
  const std::vector<Workflow> workflows = {
      {"certify", {"certify", "--k", "7", "--n-samples", "500", "--beta", "1e-6"}, {}},
      {"solve-vi", {"solve-vi", "--problem", problem}, {}},
      {"support", {"support", "--problem", problem}, {}},
      {"risk", {"risk", "--mode", "mc", "--config", risk_path, "--seed", "11"}, {}},
      {"coverage",
       {"coverage", "--trials", "10", "--n-samples", "20", "--beta", "0.05", "--seed", "3",
        "--csv"},
       {"coverage_{run}.csv"}},
      {"dr-experiment",
       {"dr-experiment", "--config", dr_path, "--profile-csv"},
       {"profile_{run}.csv"}},
  };

  for (const auto& workflow : workflows) {
    std::string out[2];
    std::vector<std::string> files[2];
    for (int run = 0; run < 2; ++run) {
      auto args = workflow.args;
      for (const auto& side : workflow.side_files) {
        auto name = side;
        name.replace(name.find("{run}"), 5, std::to_string(run));
        const auto path = scratch.file(name);
        args.push_back(path);
        files[run].push_back(path);
      }
      const auto result = run_cli(args);
      c.requiref(result.exit_code == 0, "%s run %d: exit code %d", workflow.name.c_str(), run,
                 result.exit_code);
      out[run] = result.out;
    }
    c.requiref(out[0] == out[1], "%s: stdout differs between reruns", workflow.name.c_str());
    for (std::size_t i = 0; i < files[0].size(); ++i) {
      c.requiref(slurp(files[0][i]) == slurp(files[1][i]), "%s: side file %zu differs",
                 workflow.name.c_str(), i);
    }
  }
}

struct Criterion {
  int id;
  const char* label;
  double budget_seconds;
  std::function<void(Checker&)> body;
};

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select a subset of criteria by id, e.g. `svi_acceptance 4 7`.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "posterior certificate from the command line", 1.0, criterion_certificate_cli},
      {2, "bound tables match an independent root finder", 10.0, criterion_bound_tables},
      {3, "random affine problems match KKT enumeration", 30.0, criterion_affine_vs_enumeration},
      {4, "support counts respect the dimension bound", 120.0,
       criterion_support_dimension_bound},
      {5, "coverage experiment hits its confidence target", 300.0, criterion_coverage},
      {6, "degeneracy audit separates the two layouts", 1.0, criterion_degeneracy_audit},
      {7, "desk-scale game: equilibrium and route agreement", 300.0, criterion_desk_game},
      {8, "closed-form risk inside exact binomial bands", 120.0, criterion_gaussian_vs_mc},
      {9, "experiment certification rate across 100 seeds", 1800.0,
       criterion_experiment_certification},
      {10, "seeded workflows are byte-identical", 600.0, criterion_byte_determinism},
  };

  int failed = 0;
  std::size_t ran = 0;
  for (const auto& criterion : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), criterion.id) == only.end()) continue;
    ++ran;
    Checker checker;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.body(checker);
    } catch (const std::exception& e) {
      checker.failures.push_back(std::string("unhandled exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > criterion.budget_seconds) {
      char buffer[128];
      std::snprintf(buffer, sizeof(buffer), "took %.2f s, budget is %.0f s", elapsed,
                    criterion.budget_seconds);
      checker.failures.emplace_back(buffer);
    }
    const bool pass = checker.failures.empty();
    failed += pass ? 0 : 1;
    std::printf("[%s] criterion %2d: %s (%.2f s)\n", pass ? "PASS" : "FAIL", criterion.id,
                criterion.label, elapsed);
    for (const auto& failure : checker.failures) {
      std::printf("        - %s\n", failure.c_str());
    }
    std::fflush(stdout);
  }

  if (failed == 0) {
    std::printf("all %zu criteria passed\n", ran);
  } else {
    std::printf("%d of %zu criteria FAILED\n", failed, ran);
  }
  return failed == 0 ? 0 : 1;
}
