#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "support/instances.hpp"
#include "svi/demand_response.hpp"
#include "svi/errors.hpp"

using svi::Matrix;
using svi::Vector;

namespace {

namespace fs = std::filesystem;

// RAII scratch file under the system temp directory.
struct ScratchFile {
  fs::path path;
  explicit ScratchFile(const std::string& name, const std::string& contents = {}) {
    path = fs::temp_directory_path() / name;
    if (!contents.empty()) {
      std::ofstream out(path);
      out << contents;
    }
  }
  ~ScratchFile() { std::error_code ec; fs::remove(path, ec); }
  std::string str() const { return path.string(); }
};

std::string csv_code(const std::string& path) {
  try {
    svi::dr::load_profiles(path);
  } catch (const svi::Error& e) {
    return e.code();
  }
  return "";
}

svi::dr::DRConfig tiny_config(const std::string& csv_path) {
  svi::dr::DRConfig config;
  config.agents = 2;
  config.horizon = 4;
  config.n_samples = 12;
  config.beta = 0.1;
  config.energy_law = {1.5, 0.4, 1.0, 2.0};
  config.data.type = "gaussian";
  config.data.path = csv_path;
  config.seed = 5;
  config.mc_samples = 500;
  return config;
}

std::string tiny_csv_rows() {
  // Eight positive profiles over four slots with visible slot-to-slot shape.
  std::string text;
  for (int r = 0; r < 8; ++r) {
    for (int t = 0; t < 4; ++t) {
      const double v = 2.0 + 0.5 * t + 0.1 * ((r * 7 + t * 3) % 5);
      text += std::to_string(v);
      text += (t == 3) ? '\n' : ',';
    }
  }
  return text;
}

}  // namespace

TEST_SUITE("consumption experiment") {
  TEST_CASE("profile files round-trip through save and load") {
    ScratchFile file("svi_profiles_roundtrip.csv");
    std::vector<Vector> rows{(Vector(3) << 1.0, 2.5, 0.0).finished(),
                             (Vector(3) << 4.0, 0.25, 7.125).finished()};
    svi::dr::save_profiles(file.str(), rows);
    const auto back = svi::dr::load_profiles(file.str());
    REQUIRE(back.size() == 2);
    CHECK((back[0] - rows[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back[1] - rows[1]).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("profile parsing rejects malformed input with stable codes") {
    ScratchFile bad_number("svi_profiles_bad.csv", "1.0,2.0\n1.0,oops\n");
    CHECK(csv_code(bad_number.str()) == "parse-error");

    ScratchFile negative("svi_profiles_negative.csv", "1.0,2.0\n1.0,-3.0\n");
    CHECK(csv_code(negative.str()) == "negative-demand");

    ScratchFile ragged("svi_profiles_ragged.csv", "1.0,2.0\n1.0,2.0,3.0\n");
    CHECK(csv_code(ragged.str()) == "inconsistent-width");

    CHECK(csv_code("/nonexistent/profiles.csv") == "parse-error");
  }

  TEST_CASE("blank lines are skipped, not parsed") {
    ScratchFile file("svi_profiles_blank.csv", "1.0,2.0\n\n3.0,4.0\n\n");
    const auto rows = svi::dr::load_profiles(file.str());
    CHECK(rows.size() == 2);
  }

  TEST_CASE("model fitting reproduces hand-computed moments") {
    std::vector<Vector> rows{(Vector(2) << 1.0, 2.0).finished(),
                             (Vector(2) << 3.0, 4.0).finished(),
                             (Vector(2) << 5.0, 0.0).finished()};
    const auto model = svi::dr::fit_gaussian(rows, 0.0);
    CHECK(model.mu[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(model.mu[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(model.Sigma(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(model.Sigma(1, 1) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(model.Sigma(0, 1) == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(model.ridge_used == 0.0);

    const auto ridged = svi::dr::fit_gaussian(rows);
    CHECK(ridged.ridge_used == doctest::Approx(4e-6).epsilon(1e-6));
    CHECK(ridged.Sigma(0, 0) == doctest::Approx(4.0 + ridged.ridge_used).epsilon(1e-14));

    CHECK_THROWS_AS(svi::dr::fit_gaussian({rows[0]}), svi::InvalidQueryError);
  }

  TEST_CASE("sampling replays per seed and reports the clipped share") {
    svi::dr::GaussianModel model;
    model.mu = Vector::Zero(1);
    model.Sigma = Matrix::Identity(1, 1);
    double clip_a = 0.0, clip_b = 0.0;
    const auto a = svi::dr::sample_profiles(model, 4000, 9, &clip_a);
    const auto b = svi::dr::sample_profiles(model, 4000, 9, &clip_b);
    REQUIRE(a.size() == 4000);
    CHECK(clip_a == clip_b);
    CHECK(clip_a == doctest::Approx(0.5).epsilon(0.05));
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      max_diff = std::max(max_diff, (a[i] - b[i]).cwiseAbs().maxCoeff());
      CHECK(a[i].minCoeff() >= 0.0);
    }
    CHECK(max_diff == 0.0);

    const auto c = svi::dr::sample_profiles(model, 4000, 10);
    double shifted = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      shifted = std::max(shifted, (a[i] - c[i]).cwiseAbs().maxCoeff());
    }
    CHECK(shifted > 0.0);
  }

  TEST_CASE("game assembly validates its physical inputs") {
    svi::dr::DRGameConfig config;
    config.agents = 2;
    config.horizon = 3;
    config.alpha = Vector::Ones(3);
    config.beta_price = Vector::Ones(3);
    config.cap = Vector::Ones(3);
    config.energy = (Vector(2) << 1.5, 2.0).finished();
    CHECK_NOTHROW(svi::dr::build_dr_game(config));

    auto bad_energy = config;
    bad_energy.energy[0] = 3.5;  // exceeds the 3-slot cap budget
    CHECK_THROWS_AS(svi::dr::build_dr_game(bad_energy), svi::InfeasibleSetError);

    auto bad_alpha = config;
    bad_alpha.alpha[1] = 0.0;
    CHECK_THROWS_AS(svi::dr::build_dr_game(bad_alpha), svi::InvalidQueryError);

    auto bad_width = config;
    bad_width.cap = Vector::Ones(4);
    CHECK_THROWS_AS(svi::dr::build_dr_game(bad_width), svi::DimensionMismatchError);
  }

  TEST_CASE("the assembled cost matches the tariff formula") {
    svi::dr::DRGameConfig config;
    config.agents = 2;
    config.horizon = 2;
    config.alpha = (Vector(2) << 1.0, 2.0).finished();
    config.beta_price = (Vector(2) << 0.5, 0.25).finished();
    config.cap = Vector::Ones(2);
    config.energy = (Vector(2) << 1.0, 1.0).finished();
    const auto game = svi::dr::build_dr_game(config);

    // Agent-major layout: x = (agent0 slots, agent1 slots).
    const Vector x = (Vector(4) << 0.25, 0.75, 0.5, 0.5).finished();
    const Vector d = (Vector(2) << 1.0, 3.0).finished();
    const Vector sigma = (Vector(2) << 0.75, 1.25).finished();
    double expected0 = 0.0;
    for (int t = 0; t < 2; ++t) {
      expected0 += (config.alpha[t] * sigma[t] + config.beta_price[t] * d[t]) * x[t];
    }
    CHECK(game.cost_value(0, x, d) == doctest::Approx(expected0).epsilon(1e-14));

    // Own gradient: alpha .* (sigma + own) + beta .* d on the agent block.
    const Vector grad = game.cost_own_gradient(1, x, d);
    for (int t = 0; t < 2; ++t) {
      const double expected =
          config.alpha[t] * (sigma[t] + x[2 + t]) + config.beta_price[t] * d[t];
      CHECK(grad[t] == doctest::Approx(expected).epsilon(1e-14));
    }

    const Matrix own = game.cost_own_quadratic(0);
    CHECK(own(0, 0) == doctest::Approx(2.0 * config.alpha[0]).epsilon(1e-14));
    CHECK(own(1, 1) == doctest::Approx(2.0 * config.alpha[1]).epsilon(1e-14));
    CHECK(own(0, 1) == 0.0);

    CHECK(game.declared_alpha == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(game.declared_lipschitz == doctest::Approx(3.0 * 2.0).epsilon(1e-14));
  }

  TEST_CASE("the full experiment report is internally consistent") {
    ScratchFile csv("svi_dr_tiny.csv", tiny_csv_rows());
    const auto config = tiny_config(csv.str());
    const auto report = svi::dr::run_dr_experiment(config);

    REQUIRE(report.equilibrium_converged);
    CHECK(report.x_sr.size() == 8);
    CHECK(report.t_sr.size() == 2);
    CHECK(report.sigma_profile.size() == 4);
    CHECK(report.cost_samples.rows() == 2);
    CHECK(report.cost_samples.cols() == 12);

    // Slot totals follow from the agent blocks.
    for (int t = 0; t < 4; ++t) {
      const double sigma = report.x_sr[t] + report.x_sr[4 + t];
      CHECK(report.sigma_profile[t] == doctest::Approx(sigma).epsilon(1e-12));
    }
    // Energy books per agent.
    for (int j = 0; j < 2; ++j) {
      CHECK(report.x_sr.segment(4 * j, 4).sum() ==
            doctest::Approx(report.energy[j]).epsilon(1e-8));
      // The level is the worst sampled cost.
      CHECK(report.t_sr[j] ==
            doctest::Approx(report.cost_samples.row(j).maxCoeff()).epsilon(1e-9));
      CHECK(report.agent_risk[static_cast<std::size_t>(j)] >= 0.0);
      CHECK(report.agent_risk[static_cast<std::size_t>(j)] <= 1.0);
    }
    CHECK(report.max_agent_risk ==
          doctest::Approx(std::max(report.agent_risk[0], report.agent_risk[1])).epsilon(1e-14));
    CHECK(report.certified == (report.max_agent_risk <= report.posterior.epsilon));

    // Certificates match their inputs.
    CHECK(report.posterior.k == report.s_star);
    CHECK(report.posterior.n_samples == 12);
    CHECK(report.prior.k == 8 + 2);
    CHECK(report.s_star <= 8 + 2);
    CHECK(report.aggregate_mc.samples_used == 500);
    CHECK(report.model.mu.size() == 4);
    CHECK(report.clip_fraction >= 0.0);
    CHECK(report.clip_fraction < 0.5);
  }

  TEST_CASE("the experiment replays bit-for-bit under a fixed seed") {
    ScratchFile csv("svi_dr_replay.csv", tiny_csv_rows());
    const auto config = tiny_config(csv.str());
    const auto a = svi::dr::run_dr_experiment(config);
    const auto b = svi::dr::run_dr_experiment(config);
    CHECK((a.x_sr - b.x_sr).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.t_sr - b.t_sr).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.s_star == b.s_star);
    CHECK(a.aggregate_mc.value == b.aggregate_mc.value);
    CHECK(a.max_agent_risk == b.max_agent_risk);

    auto reseeded = config;
    reseeded.seed = 6;
    const auto c = svi::dr::run_dr_experiment(reseeded);
    CHECK((a.x_sr - c.x_sr).cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("failures carry the stage that produced them") {
    auto config = tiny_config("/nonexistent/profiles.csv");
    try {
      svi::dr::run_dr_experiment(config);
      FAIL("expected a data-stage error");
    } catch (const svi::Error& e) {
      CHECK(e.stage() == "data");
      CHECK(e.code() == "parse-error");
    }

    ScratchFile csv("svi_dr_badlaw.csv", tiny_csv_rows());
    auto impossible = tiny_config(csv.str());
    impossible.energy_law = {10.0, 0.1, 9.5, 10.5};  // beyond the 4-slot cap budget
    try {
      svi::dr::run_dr_experiment(impossible);
      FAIL("expected a game-stage error");
    } catch (const svi::Error& e) {
      CHECK(e.stage() == "game");
    }
  }
}
