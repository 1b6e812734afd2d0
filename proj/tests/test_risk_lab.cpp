#include <doctest.h>

#include <cmath>

#include "svi/errors.hpp"
#include "svi/risk_lab.hpp"
#include "svi/special_functions.hpp"

using svi::Matrix;
using svi::Vector;

namespace {

// One-dimensional uniform draw on [0, 1).
Vector uniform_sampler(svi::Philox& gen) { return (Vector(1) << gen.uniform()).finished(); }

}  // namespace

TEST_SUITE("risk estimation") {
  TEST_CASE("monte carlo recovers a known uniform tail probability") {
    const auto est = svi::risk::mc_risk([](const Vector& d) { return d[0] > 0.3; },
                                        uniform_sampler, 200000, 11);
    CHECK(est.method == "monte-carlo");
    CHECK(est.samples_used == 200000);
    CHECK(est.seed == 11);
    CHECK(est.value == doctest::Approx(0.7).epsilon(0.01));
    CHECK(est.ci_low < 0.7);
    CHECK(est.ci_high > 0.7);
    CHECK(est.ci_high - est.ci_low < 0.01);
  }

  TEST_CASE("monte carlo replays exactly for a fixed seed") {
    auto once = svi::risk::mc_risk([](const Vector& d) { return d[0] > 0.5; },
                                   uniform_sampler, 50000, 7);
    auto twice = svi::risk::mc_risk([](const Vector& d) { return d[0] > 0.5; },
                                    uniform_sampler, 50000, 7);
    CHECK(once.value == twice.value);
    CHECK(once.ci_low == twice.ci_low);
    CHECK(once.ci_high == twice.ci_high);
    auto other = svi::risk::mc_risk([](const Vector& d) { return d[0] > 0.5; },
                                    uniform_sampler, 50000, 8);
    CHECK(once.value != other.value);
  }

  TEST_CASE("monte carlo enforces a minimum sample size") {
    CHECK_THROWS_AS(svi::risk::mc_risk([](const Vector&) { return false; },
                                       uniform_sampler, 50, 0),
                    svi::InvalidQueryError);
  }

  TEST_CASE("gaussian tail probabilities match the survival function") {
    // a'd ~ N(a'mu, a'Sigma a); with a = (1), mu = 0, Sigma = 1, the event
    // {d > 1} has probability sf(1).
    const auto est = svi::risk::gaussian_linear_risk(
        (Vector(1) << 1.0).finished(), 1.0, Vector::Zero(1), Matrix::Identity(1, 1));
    CHECK(est.method == "gaussian-closed-form");
    CHECK(est.value == doctest::Approx(svi::normal_sf(1.0)).epsilon(1e-14));
    CHECK(est.ci_low == est.value);
    CHECK(est.ci_high == est.value);
  }

  TEST_CASE("gaussian risk handles correlated coordinates") {
    // a = (1, 2), mu = (0, 1), Sigma = [[1, 0.5], [0.5, 2]]:
    // mean = 2, variance = 1 + 4*2 + 2*2*0.5 = 11.
    Matrix Sigma(2, 2);
    Sigma << 1.0, 0.5, 0.5, 2.0;
    const auto est = svi::risk::gaussian_linear_risk(
        (Vector(2) << 1.0, 2.0).finished(), 1.0, (Vector(2) << 0.0, 1.0).finished(), Sigma);
    CHECK(est.value ==
          doctest::Approx(svi::normal_sf((1.0 - 2.0) / std::sqrt(11.0))).epsilon(1e-13));
  }

  TEST_CASE("degenerate directions collapse to a step function") {
    const Vector a = (Vector(2) << 1.0, -1.0).finished();
    const Matrix Sigma = Matrix::Ones(2, 2);  // a'Sigma a = 0
    const Vector mu_hi = (Vector(2) << 3.0, 0.0).finished();
    const Vector mu_lo = (Vector(2) << 0.0, 0.0).finished();
    CHECK(svi::risk::gaussian_linear_risk(a, 1.0, mu_hi, Sigma).value == 1.0);
    CHECK(svi::risk::gaussian_linear_risk(a, 1.0, mu_lo, Sigma).value == 0.0);
  }

  TEST_CASE("indefinite covariances are rejected") {
    Matrix Sigma(2, 2);
    Sigma << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
    CHECK_THROWS_AS(svi::risk::gaussian_linear_risk((Vector(2) << 1.0, 0.0).finished(), 0.0,
                                                    Vector::Zero(2), Sigma),
                    svi::Error);
  }

  TEST_CASE("coverage trials certify the one-dimensional instance") {
    svi::risk::CoverageConfig config;
    config.trials = 25;
    config.n_samples = 30;
    config.beta = 0.05;
    config.seed = 3;
    const auto result = svi::risk::coverage_experiment(config);
    CHECK(result.trials == 25);
    CHECK(result.beta == 0.05);
    REQUIRE(result.rows.size() == 25);

    long counted = 0;
    long violations = 0;
    long histogram_total = 0;
    for (const auto& row : result.rows) {
      CHECK(row.epsilon >= 0.0);
      CHECK(row.epsilon <= 1.0);
      CHECK(row.exact_risk >= 0.0);
      CHECK(row.exact_risk <= 1.0);
      CHECK(row.s_star >= 0);
      CHECK(row.s_star <= 1);  // one decision variable
      if (!row.excluded) {
        ++counted;
        CHECK(row.violated == (row.exact_risk > row.epsilon));
        if (row.violated) ++violations;
      }
    }
    for (long count : result.s_star_histogram) histogram_total += count;
    CHECK(histogram_total == counted);
    CHECK(result.excluded == result.trials - counted);
    CHECK(result.violations == violations);
    if (counted > 0) {
      CHECK(result.empirical_rate ==
            doctest::Approx(static_cast<double>(violations) / counted).epsilon(1e-14));
    }
  }

  TEST_CASE("coverage replays exactly for a fixed seed") {
    svi::risk::CoverageConfig config;
    config.trials = 10;
    config.n_samples = 20;
    config.seed = 42;
    const auto a = svi::risk::coverage_experiment(config);
    const auto b = svi::risk::coverage_experiment(config);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].x_star == b.rows[i].x_star);
      CHECK(a.rows[i].exact_risk == b.rows[i].exact_risk);
      CHECK(a.rows[i].s_star == b.rows[i].s_star);
    }
  }
}
