#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "svi/types.hpp"

namespace svi::convex_sets {

struct ProjectionControls {
  double tol = 1e-9;       // per-sweep iterate change below this ends Dykstra
  long max_sweeps = 10000; // sweeps beyond this mean the intersection is (near) empty
};

// q(u) = 0.5 u'Qu + c'u + d on a coordinate block. `diagonal` marks Q as
// diagonal so projections can use O(m) solves instead of dense factorizations.
struct QuadraticForm {
  Matrix Q;
  Vector c;
  double d = 0.0;
  bool diagonal = false;

  double value(const Vector& u) const;
  Vector gradient(const Vector& u) const;
};

// One convex constraint g(x) <= 0 over the ambient space. Implementations
// know which coordinates they touch and how to project onto their own
// feasible region exactly; the set composes them.
class Constraint {
 public:
  virtual ~Constraint() = default;

  virtual int dim() const = 0;
  virtual double residual(const Vector& x) const = 0;  // g(x); feasible iff <= 0
  virtual Vector project(const Vector& x) const = 0;
  virtual const std::vector<int>& coords() const = 0;
  virtual bool affine() const = 0;

  // Gradient of g at x, indexed like coords(), for building supporting
  // halfspaces of smooth constraints. Empty when unavailable; the composed
  // projection then falls back to alternating projections for the block.
  virtual Vector gradient(const Vector& x) const;

  // Appends rows a'x <= b (full-dimensional a) for the polyhedral QP path.
  // Only called when affine() is true.
  virtual void affine_rows(std::vector<Vector>& rows_a, std::vector<double>& rows_b) const;
};

using ConstraintPtr = std::shared_ptr<const Constraint>;

// Intersection of constraints over R^dim. Copies are shallow (constraints are
// immutable and shared), which keeps leave-one-out problem rebuilds cheap.
class ConvexSet {
 public:
  ConvexSet() = default;
  explicit ConvexSet(int dim);

  int dim() const { return dim_; }
  std::size_t size() const { return constraints_.size(); }
  bool unconstrained() const { return constraints_.empty(); }
  const std::vector<ConstraintPtr>& constraints() const { return constraints_; }

  // a'x <= b with a over all coordinates, or over an index block.
  ConvexSet& add_halfspace(const Vector& a, double b);
  ConvexSet& add_halfspace(std::vector<int> coords, const Vector& a, double b);

  // lo <= x <= b componentwise; +/-inf entries disable a side.
  ConvexSet& add_box(const Vector& lo, const Vector& hi);
  ConvexSet& add_box(std::vector<int> coords, const Vector& lo, const Vector& hi);

  // 0.5 x'Qx + c'x <= b, Q symmetric PSD (checked to eigenvalue >= -1e-8 scale).
  ConvexSet& add_quadratic(const Matrix& Q, const Vector& c, double b);
  ConvexSet& add_quadratic(std::vector<int> coords, const Matrix& Q, const Vector& c, double b);

  // h(u) - t <= 0 where u = x[u_coords], t = x[t_index], h a quadratic form.
  ConvexSet& add_epigraph(std::vector<int> u_coords, int t_index, QuadraticForm h);

  // Same with h given as a smooth convex oracle (value + gradient on the block).
  ConvexSet& add_epigraph(std::vector<int> u_coords, int t_index,
                          std::function<double(const Vector&)> h_value,
                          std::function<Vector(const Vector&)> h_gradient);

  ConvexSet& add_constraint(ConstraintPtr constraint);

  // Appends every constraint of `other` (dimensions must agree).
  ConvexSet& absorb(const ConvexSet& other);

  bool contains(const Vector& x, double tol) const;
  double violation(const Vector& x) const;  // max_i max(g_i(x), 0); 0 iff feasible
  Vector project(const Vector& x, const ProjectionControls& pc = {}) const;

 private:
  int dim_ = 0;
  std::vector<ConstraintPtr> constraints_;
};

ConvexSet intersection(const std::vector<const ConvexSet*>& parts);

}  // namespace svi::convex_sets
