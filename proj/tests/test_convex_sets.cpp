#include <doctest.h>

#include <cmath>

#include "svi/convex_sets.hpp"
#include "svi/errors.hpp"
#include "svi/rng.hpp"

using svi::Matrix;
using svi::Vector;
using svi::convex_sets::ConvexSet;
using svi::convex_sets::QuadraticForm;

namespace {

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

}  // namespace

TEST_SUITE("convex sets") {
  TEST_CASE("an unconstrained set projects to the identity") {
    ConvexSet set(3);
    CHECK(set.unconstrained());
    const Vector x = (Vector(3) << 1.0, -2.0, 0.5).finished();
    CHECK((set.project(x) - x).norm() == 0.0);
    CHECK(set.violation(x) == 0.0);
  }

  TEST_CASE("box projection clamps coordinatewise") {
    ConvexSet set(2);
    set.add_box(vec2(-1.0, 0.0), vec2(1.0, 2.0));
    CHECK((set.project(vec2(3.0, -5.0)) - vec2(1.0, 0.0)).norm() == doctest::Approx(0.0));
    CHECK((set.project(vec2(0.5, 1.5)) - vec2(0.5, 1.5)).norm() == doctest::Approx(0.0));
    CHECK(set.contains(vec2(0.0, 1.0), 1e-12));
    CHECK(!set.contains(vec2(0.0, 2.5), 1e-12));
    CHECK(set.violation(vec2(0.0, 2.5)) == doctest::Approx(0.5));
  }

  TEST_CASE("halfspace projection is the analytic reflection") {
    ConvexSet set(2);
    set.add_halfspace(vec2(1.0, 1.0), 0.0);
    const Vector p = set.project(vec2(2.0, 1.0));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(-0.5).epsilon(1e-12));
  }

  TEST_CASE("polyhedral corners are recovered exactly") {
    // Intersection of x1 <= 0, x2 <= 0, x1 + x2 <= 0; the last row is
    // redundant, the projection of (2, 1) is the origin.
    ConvexSet set(2);
    set.add_halfspace(vec2(1.0, 0.0), 0.0);
    set.add_halfspace(vec2(0.0, 1.0), 0.0);
    set.add_halfspace(vec2(1.0, 1.0), 0.0);
    const Vector p = set.project(vec2(2.0, 1.0));
    CHECK(p.norm() <= 1e-10);
  }

  TEST_CASE("dropping one row moves the projection to the edge") {
    ConvexSet set(2);
    set.add_halfspace(vec2(0.0, 1.0), 0.0);
    set.add_halfspace(vec2(1.0, 1.0), 0.0);
    const Vector p = set.project(vec2(2.0, 1.0));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(p[1] == doctest::Approx(-0.5).epsilon(1e-10));
  }

  TEST_CASE("ball projection rescales the radius") {
    // 0.5 x'x <= 0.5 is the unit ball.
    ConvexSet set(2);
    set.add_quadratic(Matrix::Identity(2, 2), Vector::Zero(2), 0.5);
    const Vector p = set.project(vec2(3.0, 4.0));
    CHECK(p.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p[0] / p[1] == doctest::Approx(3.0 / 4.0).epsilon(1e-9));
  }

  TEST_CASE("mixed quadratic and affine constraints agree with hand geometry") {
    // Unit ball intersected with x1 >= 0.6: the projection of (-1, 1) lands
    // on the circle at x1 = 0.6 with x2 = 0.8.
    ConvexSet set(2);
    set.add_quadratic(Matrix::Identity(2, 2), Vector::Zero(2), 0.5);
    set.add_halfspace(vec2(-1.0, 0.0), -0.6);
    const Vector p = set.project(vec2(-1.0, 1.0), {1e-11, 20000});
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-7));
  }

  TEST_CASE("projection onto an intersection is idempotent and feasible") {
    svi::Philox gen(77, 0);
    ConvexSet set(3);
    set.add_box((Vector(3) << -1, -1, -1).finished(), (Vector(3) << 1, 1, 1).finished());
    set.add_halfspace((Vector(3) << 1, 1, 1).finished(), 1.0);
    // Radius sqrt(1.8): crosses the box faces transversally but stays clear
    // of the box edges at distance sqrt(2), where the intersection would be
    // tangential and alternating projections lose their linear rate.
    set.add_quadratic(Matrix::Identity(3, 3), Vector::Zero(3), 0.9);
    for (int i = 0; i < 25; ++i) {
      Vector x(3);
      for (int d = 0; d < 3; ++d) x[d] = gen.uniform(-4.0, 4.0);
      const Vector p = set.project(x);
      CHECK(set.violation(p) <= 1e-8);
      CHECK((set.project(p) - p).norm() <= 1e-7);
    }
  }

  TEST_CASE("block constraints on disjoint coordinates project independently") {
    ConvexSet set(4);
    set.add_box({0, 1}, vec2(0.0, 0.0), vec2(1.0, 1.0));
    set.add_halfspace({2, 3}, vec2(1.0, 1.0), 0.0);
    const Vector x = (Vector(4) << 2.0, -1.0, 2.0, 1.0).finished();
    const Vector p = set.project(x);
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(p[2] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(p[3] == doctest::Approx(-0.5).epsilon(1e-10));
  }

  TEST_CASE("equality via paired halfspaces pins the coordinate sum") {
    ConvexSet set(2);
    set.add_halfspace(vec2(1.0, 1.0), 1.0);
    set.add_halfspace(vec2(-1.0, -1.0), -1.0);
    set.add_box(vec2(0.0, 0.0), vec2(1.0, 1.0));
    const Vector p = set.project(vec2(0.9, 0.8));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(p[0] == doctest::Approx(0.55).epsilon(1e-8));
  }

  TEST_CASE("epigraph constraint lifts a parabola") {
    // h(u) = u^2 (Q = 2 I in the half-quadratic convention); the point
    // (1, 0) projects onto the boundary t = u^2 between (0,0) and (1,1).
    QuadraticForm h;
    h.Q = (Matrix(1, 1) << 2.0).finished();
    h.c = Vector::Zero(1);
    h.d = 0.0;
    ConvexSet set(2);
    set.add_epigraph({0}, 1, h);
    const Vector p = set.project(vec2(1.0, 0.0), {1e-11, 20000});
    CHECK(p[1] == doctest::Approx(p[0] * p[0]).epsilon(1e-6));
    CHECK(p[0] < 1.0);
    CHECK(p[1] > 0.0);
    CHECK(set.violation(p) <= 1e-8);
  }

  TEST_CASE("infeasible intersections raise the infeasibility error") {
    ConvexSet set(1);
    set.add_halfspace((Vector(1) << 1.0).finished(), -1.0);   // x <= -1
    set.add_halfspace((Vector(1) << -1.0).finished(), -1.0);  // x >= 1
    CHECK_THROWS_AS(set.project((Vector(1) << 0.0).finished(), {1e-9, 50}),
                    svi::InfeasibleSetError);
  }

  TEST_CASE("absorbing another set concatenates the constraints") {
    ConvexSet a(2);
    a.add_halfspace(vec2(1.0, 0.0), 0.0);
    ConvexSet b(2);
    b.add_halfspace(vec2(0.0, 1.0), 0.0);
    a.absorb(b);
    CHECK(a.size() == 2);
    const Vector p = a.project(vec2(1.0, 1.0));
    CHECK(p.cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("dimension mismatches are rejected") {
    ConvexSet set(2);
    CHECK_THROWS_AS(set.add_halfspace((Vector(3) << 1, 1, 1).finished(), 0.0),
                    svi::DimensionMismatchError);
    ConvexSet other(3);
    CHECK_THROWS_AS(set.absorb(other), svi::DimensionMismatchError);
    CHECK_THROWS_AS(set.violation((Vector(3) << 0, 0, 0).finished()),
                    svi::DimensionMismatchError);
  }
}
