#include "svicli/dispatch.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "svi/errors.hpp"
#include "svi/risk_lab.hpp"
#include "svicli/json_io.hpp"
#include "svicli/manifest.hpp"

namespace svi::cli {

namespace {

json read_json_file(const std::string& path) {
  return with_stage("parse", [&]() -> json {
    std::ifstream in(path);
    if (!in) throw ParseError("parse-error", "cannot open file: " + path);
    try {
      return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("parse-error", "invalid JSON in " + path + ": " + e.what());
    }
  });
}

// Collects every byte the run emits, so the manifest can digest it.
class Emitter {
 public:
  explicit Emitter(std::ostream& out) : out_(out) {}

  void payload(const json& doc, const std::string& out_path) {
    std::string text = doc.dump(2);
    text += '\n';
    out_ << text;
    records_.push_back({"-", fnv1a64_hex(text)});
    if (!out_path.empty()) file(out_path, text);
  }

  void file(const std::string& path, const std::string& text) {
    with_stage("output", [&] {
      std::ofstream stream(path, std::ios::binary);
      if (!stream) throw ParseError("write-error", "cannot write file: " + path);
      stream << text;
    });
    records_.push_back({path, fnv1a64_hex(text)});
  }

  const std::vector<OutputRecord>& records() const { return records_; }

 private:
  std::ostream& out_;
  std::vector<OutputRecord> records_;
};

std::string format_csv(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
  std::ostringstream text;
  text.precision(17);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) text << ',';
    text << header[c];
  }
  text << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) text << ',';
      text << row[c];
    }
    text << '\n';
  }
  return text.str();
}

struct CommonFlags {
  std::string out_path;
  std::string manifest_path;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--out", flags.out_path, "Also write the result JSON to this file");
  cmd->add_option("--manifest", flags.manifest_path,
                  "Write a run manifest (config echo, digests, duration) to this file");
}

void finish(Emitter& emitter, const CommonFlags& flags, const std::string& subcommand,
            json config_echo, std::uint64_t seed,
            const std::chrono::steady_clock::time_point& started) {
  if (flags.manifest_path.empty()) return;
  const double duration =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const json manifest =
      make_manifest(subcommand, std::move(config_echo), seed, emitter.records(), duration);
  std::string text = manifest.dump(2);
  text += '\n';
  with_stage("output", [&] {
    std::ofstream stream(flags.manifest_path, std::ios::binary);
    if (!stream) throw ParseError("write-error", "cannot write file: " + flags.manifest_path);
    stream << text;
  });
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sampled variational problems with probabilistic feasibility certificates"};
  app.require_subcommand(1);

  // ---- certify ----------------------------------------------------------------
  auto* certify = app.add_subcommand("certify", "Violation-probability bound for a support count");
  long certify_k = 0;
  long certify_n = 0;
  double certify_beta = 0.0;
  bool certify_prior = false;
  CommonFlags certify_flags;
  certify->add_option("--k", certify_k, "Support count (a posteriori) or dimension (a priori)")
      ->required();
  certify->add_option("--n-samples", certify_n, "Number of drawn scenarios")->required();
  certify->add_option("--beta", certify_beta, "Confidence parameter in (0, 1)")->required();
  certify->add_flag("--a-priori", certify_prior, "Evaluate the bound in its a-priori form");
  add_common(certify, certify_flags);

  // ---- solve-vi ----------------------------------------------------------------
  auto* solve = app.add_subcommand("solve-vi", "Solve a sampled variational problem");
  std::string solve_problem;
  bool solve_qvi = false;
  CommonFlags solve_flags;
  solve->add_option("--problem", solve_problem, "Problem description JSON file")->required();
  solve->add_flag("--qvi", solve_qvi, "Solve through the anchored fixed-point loop");
  add_common(solve, solve_flags);

  // ---- support -------------------------------------------------------------------
  auto* support_cmd = app.add_subcommand("support", "Count support scenarios of a problem");
  std::string support_problem;
  double support_tol = 1e-6;
  bool support_qvi = false;
  CommonFlags support_flags;
  support_cmd->add_option("--problem", support_problem, "Problem description JSON file")
      ->required();
  support_cmd->add_option("--tol", support_tol, "Displacement threshold for classification");
  support_cmd->add_flag("--qvi", support_qvi, "Treat the problem as anchor-dependent");
  add_common(support_cmd, support_flags);

  // ---- risk ---------------------------------------------------------------------
  auto* risk_cmd = app.add_subcommand("risk", "Violation probability of a linear threshold event");
  std::string risk_mode;
  std::string risk_config;
  std::uint64_t risk_seed = 0;
  CommonFlags risk_flags;
  risk_cmd->add_option("--mode", risk_mode, "Estimator: mc or gaussian")
      ->required()
      ->check(CLI::IsMember({"mc", "gaussian"}));
  risk_cmd->add_option("--config", risk_config, "Event description JSON file")->required();
  risk_cmd->add_option("--seed", risk_seed, "Sampling seed (mc mode)");
  add_common(risk_cmd, risk_flags);

  // ---- coverage --------------------------------------------------------------------
  auto* coverage = app.add_subcommand("coverage", "Empirical check of the certificate coverage");
  std::string coverage_instance = "builtin-1d";
  long coverage_trials = 200;
  long coverage_n = 50;
  double coverage_beta = 0.05;
  std::uint64_t coverage_seed = 0;
  std::string coverage_csv;
  CommonFlags coverage_flags;
  coverage->add_option("--instance", coverage_instance, "Test instance")
      ->check(CLI::IsMember({"builtin-1d"}));
  coverage->add_option("--trials", coverage_trials, "Number of independent trials");
  coverage->add_option("--n-samples", coverage_n, "Scenarios per trial");
  coverage->add_option("--beta", coverage_beta, "Confidence parameter");
  coverage->add_option("--seed", coverage_seed, "Trial seed");
  coverage->add_option("--csv", coverage_csv, "Write per-trial rows to this CSV file");
  add_common(coverage, coverage_flags);

  // ---- dr-experiment ------------------------------------------------------------------
  auto* dr_cmd = app.add_subcommand("dr-experiment", "End-to-end consumption-game experiment");
  std::string dr_config_path;
  std::int64_t dr_seed = -1;
  std::string dr_profile_csv;
  std::string dr_costs_csv;
  CommonFlags dr_flags;
  dr_cmd->add_option("--config", dr_config_path, "Experiment config JSON file")->required();
  dr_cmd->add_option("--seed", dr_seed, "Override the config seed (non-negative)");
  dr_cmd->add_option("--profile-csv", dr_profile_csv,
                     "Write per-slot (t, mu, sigma at the solution) rows to this CSV file");
  dr_cmd->add_option("--costs-csv", dr_costs_csv,
                     "Write per-agent per-scenario cost rows to this CSV file");
  add_common(dr_cmd, dr_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return 2;
  }

  const auto started = std::chrono::steady_clock::now();
  Emitter emitter(out);
  try {
    if (certify->parsed()) {
      const auto kind = certify_prior ? scenario_bounds::CertificateKind::a_priori
                                      : scenario_bounds::CertificateKind::a_posteriori;
      const auto cert = with_stage("certify", [&] {
        return scenario_bounds::certify(certify_k, certify_n, certify_beta, kind);
      });
      emitter.payload(certificate_to_json(cert), certify_flags.out_path);
      finish(emitter, certify_flags, "certify",
             json{{"k", certify_k},
                  {"n_samples", certify_n},
                  {"beta", certify_beta},
                  {"kind", scenario_bounds::kind_name(kind)}},
             0, started);
    } else if (solve->parsed()) {
      const json doc = read_json_file(solve_problem);
      const auto problem = with_stage("parse", [&] { return problem_from_json(doc, solve_qvi); });
      const auto solution = with_stage("solve", [&] { return vi::solve(problem); });
      emitter.payload(solution_to_json(solution), solve_flags.out_path);
      finish(emitter, solve_flags, "solve-vi", json{{"problem", doc}, {"qvi", solve_qvi}}, 0,
             started);
    } else if (support_cmd->parsed()) {
      const json doc = read_json_file(support_problem);
      const auto problem =
          with_stage("parse", [&] { return problem_from_json(doc, support_qvi); });
      auto report = with_stage("support", [&] {
        auto r = support::count_support(problem, {}, support_tol);
        support::check_degeneracy(problem, r);
        return r;
      });
      emitter.payload(support_report_to_json(report), support_flags.out_path);
      finish(emitter, support_flags, "support",
             json{{"problem", doc}, {"tol", support_tol}, {"qvi", support_qvi}}, 0, started);
    } else if (risk_cmd->parsed()) {
      const json doc = read_json_file(risk_config);
      const auto estimate = with_stage("risk", [&]() -> risk::RiskEstimate {
        const Vector a = vector_from_json(doc.at("a"), "risk.a");
        const double threshold = doc.at("threshold").get<double>();
        const Vector mu = vector_from_json(doc.at("mu"), "risk.mu");
        const Matrix Sigma = matrix_from_json(doc.at("Sigma"), "risk.Sigma");
        if (risk_mode == "gaussian") {
          return risk::gaussian_linear_risk(a, threshold, mu, Sigma);
        }
        const long samples = doc.contains("samples") ? doc["samples"].get<long>() : 1'000'000L;
        Eigen::LLT<Matrix> llt(Sigma);
        Matrix L;
        if (llt.info() == Eigen::Success) {
          L = llt.matrixL();
        } else {
          Eigen::SelfAdjointEigenSolver<Matrix> eig(Sigma);
          if (eig.eigenvalues().minCoeff() <
              -1e-8 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
            throw Error("non-psd-covariance", "covariance has a negative eigenvalue");
          }
          L = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        }
        const long dim = mu.size();
        return risk::mc_risk(
            [a, threshold](const Vector& d) { return a.dot(d) > threshold; },
            [mu, L, dim](Philox& gen) {
              Vector z(dim);
              for (long t = 0; t < dim; ++t) z[t] = gen.normal();
              return Vector(mu + L * z);
            },
            samples, risk_seed);
      });
      emitter.payload(risk_estimate_to_json(estimate), risk_flags.out_path);
      finish(emitter, risk_flags, "risk", json{{"mode", risk_mode}, {"config", doc}}, risk_seed,
             started);
    } else if (coverage->parsed()) {
      risk::CoverageConfig config;
      config.trials = coverage_trials;
      config.n_samples = coverage_n;
      config.beta = coverage_beta;
      config.seed = coverage_seed;
      const auto result = with_stage("coverage", [&] { return risk::coverage_experiment(config); });
      emitter.payload(coverage_to_json(result), coverage_flags.out_path);
      if (!coverage_csv.empty()) {
        std::vector<std::vector<double>> rows;
        rows.reserve(result.rows.size());
        for (const auto& row : result.rows) {
          rows.push_back({static_cast<double>(row.trial), static_cast<double>(row.s_star),
                          row.epsilon, row.exact_risk, row.violated ? 1.0 : 0.0,
                          row.excluded ? 1.0 : 0.0, row.x_star});
        }
        emitter.file(coverage_csv,
                     format_csv({"trial", "s_star", "epsilon", "exact_risk", "violated",
                                 "excluded", "x_star"},
                                rows));
      }
      finish(emitter, coverage_flags, "coverage",
             json{{"instance", coverage_instance},
                  {"trials", coverage_trials},
                  {"n_samples", coverage_n},
                  {"beta", coverage_beta}},
             coverage_seed, started);
    } else if (dr_cmd->parsed()) {
      const json doc = read_json_file(dr_config_path);
      auto config = with_stage("parse", [&] { return dr_config_from_json(doc); });
      if (dr_seed >= 0) config.seed = static_cast<std::uint64_t>(dr_seed);
      const auto report = dr::run_dr_experiment(config);
      emitter.payload(dr_report_to_json(report), dr_flags.out_path);
      if (!dr_profile_csv.empty()) {
        std::vector<std::vector<double>> rows;
        for (long t = 0; t < config.horizon; ++t) {
          rows.push_back({static_cast<double>(t), report.model.mu[t], report.sigma_profile[t]});
        }
        emitter.file(dr_profile_csv, format_csv({"t", "mu", "sigma_x_sr"}, rows));
      }
      if (!dr_costs_csv.empty()) {
        std::vector<std::vector<double>> rows;
        for (long j = 0; j < report.cost_samples.rows(); ++j) {
          for (long i = 0; i < report.cost_samples.cols(); ++i) {
            rows.push_back({static_cast<double>(j), static_cast<double>(i),
                            report.cost_samples(j, i)});
          }
        }
        emitter.file(dr_costs_csv, format_csv({"agent", "scenario", "cost"}, rows));
      }
      finish(emitter, dr_flags, "dr-experiment", json{{"config", doc}, {"seed", config.seed}},
             config.seed, started);
    }
  } catch (Error& e) {
    const json error = {{"error",
                         {{"stage", e.stage().empty() ? "run" : e.stage()},
                          {"code", e.code()},
                          {"message", e.what()}}}};
    err << error.dump(2) << '\n';
    return 1;
  } catch (const std::exception& e) {
    const json error = {
        {"error", {{"stage", "internal"}, {"code", "unexpected"}, {"message", e.what()}}}};
    err << error.dump(2) << '\n';
    return 1;
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("svi");
  for (const std::string& arg : args) argv.push_back(arg.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace svi::cli
