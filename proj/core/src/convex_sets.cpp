// Exact projections for the individual constraint kinds, plus the composition
// schemes for intersections:
//
//  * all-affine pieces collapse into one polyhedron handled by a dual
//    active-set projection (finite, exact up to linear-solve rounding);
//  * blocks with curved pieces first run outer linearization — project onto
//    the polyhedral relaxation, cut violated smooth constraints at the
//    iterate, repeat — which stays fast even when many smooth surfaces meet
//    at vanishing angles;
//  * Dykstra's alternating projection is the fallback for whatever the other
//    two decline, with the polyhedral part grouped as a single set so the
//    alternation only reconciles the few genuinely distinct geometries.
//
// Curved constraints project via a 1-D dual root: for q(u) <= 0 the
// projection of z is u(lam) = (I + lam Q)^{-1} (z - lam c) with lam >= 0 the
// unique root of q(u(lam)) = 0, found by bracketed bisection. The epigraph
// variant h(u) <= t uses psi(lam) = h(u(lam)) - tau - lam, which is strictly
// decreasing, so the same bracketing argument applies.
//
// Coordinates are partitioned into independent blocks (union-find over the
// coupling constraints; boxes act coordinatewise and never merge blocks) and
// each block projects on its own, so products of per-agent sets decompose
// automatically instead of paying for one joint solve.

#include "svi/convex_sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <utility>

#include "svi/errors.hpp"
#include "svi/piecewise_qp.hpp"

namespace svi::convex_sets {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double QuadraticForm::value(const Vector& u) const {
  if (Q.size() == 0) return c.dot(u) + d;
  return 0.5 * u.dot(Q * u) + c.dot(u) + d;
}

Vector QuadraticForm::gradient(const Vector& u) const {
  if (Q.size() == 0) return c;
  return Q * u + c;
}

void Constraint::affine_rows(std::vector<Vector>&, std::vector<double>&) const {
  throw Error("internal", "affine_rows called on a non-affine constraint");
}

Vector Constraint::gradient(const Vector&) const { return Vector(); }

namespace {

Vector gather(const Vector& x, const std::vector<int>& coords) {
  Vector out(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[coords[i]];
  return out;
}

void scatter(Vector& x, const std::vector<int>& coords, const Vector& values) {
  for (std::size_t i = 0; i < coords.size(); ++i) x[coords[i]] = values[static_cast<Eigen::Index>(i)];
}

std::vector<int> full_range(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void check_coords(const std::vector<int>& coords, int dim, const char* what) {
  if (coords.empty()) throw InvalidQueryError(std::string(what) + ": empty coordinate block");
  for (int c : coords)
    if (c < 0 || c >= dim)
      throw DimensionMismatchError(std::string(what) + ": coordinate index out of range");
}

// ---------------------------------------------------------------------------
// Halfspace a'u <= b over a coordinate block.

class HalfspaceConstraint final : public Constraint {
 public:
  HalfspaceConstraint(int dim, std::vector<int> coords, Vector a, double b)
      : dim_(dim), coords_(std::move(coords)), a_(std::move(a)), b_(b) {
    check_coords(coords_, dim_, "halfspace");
    if (static_cast<std::size_t>(a_.size()) != coords_.size())
      throw DimensionMismatchError("halfspace: coefficient count does not match coordinate count");
    norm2_ = a_.squaredNorm();
    if (!(norm2_ > 0.0) || !std::isfinite(norm2_) || !std::isfinite(b_))
      throw InvalidQueryError("halfspace: normal must be finite and nonzero");
  }

  int dim() const override { return dim_; }
  double residual(const Vector& x) const override { return a_.dot(gather(x, coords_)) - b_; }
  const std::vector<int>& coords() const override { return coords_; }
  bool affine() const override { return true; }

  Vector project(const Vector& x) const override {
    const double v = residual(x);
    if (v <= 0.0) return x;
    Vector out = x;
    const double step = v / norm2_;
    for (std::size_t i = 0; i < coords_.size(); ++i)
      out[coords_[i]] -= step * a_[static_cast<Eigen::Index>(i)];
    return out;
  }

  void affine_rows(std::vector<Vector>& rows_a, std::vector<double>& rows_b) const override {
    Vector row = Vector::Zero(dim_);
    for (std::size_t i = 0; i < coords_.size(); ++i)
      row[coords_[i]] = a_[static_cast<Eigen::Index>(i)];
    rows_a.push_back(std::move(row));
    rows_b.push_back(b_);
  }

 private:
  int dim_;
  std::vector<int> coords_;
  Vector a_;
  double b_;
  double norm2_;
};

// ---------------------------------------------------------------------------
// Box lo <= u <= hi over a coordinate block; acts coordinatewise.

class BoxConstraint final : public Constraint {
 public:
  BoxConstraint(int dim, std::vector<int> coords, Vector lo, Vector hi)
      : dim_(dim), coords_(std::move(coords)), lo_(std::move(lo)), hi_(std::move(hi)) {
    check_coords(coords_, dim_, "box");
    if (static_cast<std::size_t>(lo_.size()) != coords_.size() ||
        static_cast<std::size_t>(hi_.size()) != coords_.size())
      throw DimensionMismatchError("box: bound count does not match coordinate count");
    for (Eigen::Index i = 0; i < lo_.size(); ++i)
      if (lo_[i] > hi_[i]) throw InfeasibleSetError("box: lower bound exceeds upper bound");
  }

  int dim() const override { return dim_; }
  const std::vector<int>& coords() const override { return coords_; }
  bool affine() const override { return true; }

  double residual(const Vector& x) const override {
    double worst = -kInf;
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      const double v = x[coords_[i]];
      const auto k = static_cast<Eigen::Index>(i);
      worst = std::max(worst, std::max(lo_[k] - v, v - hi_[k]));
    }
    return worst;
  }

  Vector project(const Vector& x) const override {
    Vector out = x;
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      out[coords_[i]] = std::clamp(out[coords_[i]], lo_[k], hi_[k]);
    }
    return out;
  }

  void affine_rows(std::vector<Vector>& rows_a, std::vector<double>& rows_b) const override {
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (std::isfinite(hi_[k])) {
        Vector row = Vector::Zero(dim_);
        row[coords_[i]] = 1.0;
        rows_a.push_back(std::move(row));
        rows_b.push_back(hi_[k]);
      }
      if (std::isfinite(lo_[k])) {
        Vector row = Vector::Zero(dim_);
        row[coords_[i]] = -1.0;
        rows_a.push_back(std::move(row));
        rows_b.push_back(-lo_[k]);
      }
    }
  }

 private:
  int dim_;
  std::vector<int> coords_;
  Vector lo_, hi_;
};

// ---------------------------------------------------------------------------
// Shared dual-root machinery for quadratic-type constraints.

// Solves (I + lam Q) u = z - lam c for the current lambda.
Vector dual_point(const QuadraticForm& f, const Vector& z, double lam) {
  if (f.Q.size() == 0) return z - lam * f.c;
  if (f.diagonal) {
    Vector u(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      u[i] = (z[i] - lam * f.c[i]) / (1.0 + lam * f.Q(i, i));
    return u;
  }
  Matrix A = Matrix::Identity(z.size(), z.size()) + lam * f.Q;
  return A.ldlt().solve(z - lam * f.c);
}

// Root of a strictly decreasing psi with psi(0) > 0: double a bracket, then
// bisect to floating-point resolution. Returns the feasible-side endpoint.
template <typename Psi>
double dual_root(Psi&& psi, const char* what) {
  double hi = 1.0;
  int doublings = 0;
  while (psi(hi) > 0.0) {
    hi *= 2.0;
    if (++doublings > 90)
      throw InfeasibleSetError(std::string(what) + ": feasible region appears empty");
  }
  double lo = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (psi(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return hi;
}

// 0.5 u'Qu + c'u + d <= 0 over a block (d carries the -b of the public API).
class QuadraticConstraint final : public Constraint {
 public:
  QuadraticConstraint(int dim, std::vector<int> coords, QuadraticForm f)
      : dim_(dim), coords_(std::move(coords)), f_(std::move(f)) {
    check_coords(coords_, dim_, "quadratic");
    const auto n = static_cast<Eigen::Index>(coords_.size());
    if (f_.Q.rows() != n || f_.Q.cols() != n || f_.c.size() != n)
      throw DimensionMismatchError("quadratic: Q/c sizes do not match coordinate count");
    if (!f_.Q.isApprox(f_.Q.transpose())) f_.Q = 0.5 * (f_.Q + f_.Q.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(f_.Q, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (lo < -1e-8 * scale)
      throw Error("non-psd-quadratic", "quadratic constraint matrix has a negative eigenvalue");
    f_.diagonal = f_.Q.isDiagonal(0.0);
  }

  int dim() const override { return dim_; }
  const std::vector<int>& coords() const override { return coords_; }
  bool affine() const override { return false; }
  double residual(const Vector& x) const override { return f_.value(gather(x, coords_)); }
  Vector gradient(const Vector& x) const override { return f_.gradient(gather(x, coords_)); }

  Vector project(const Vector& x) const override {
    const Vector z = gather(x, coords_);
    if (f_.value(z) <= 0.0) return x;
    const double lam = dual_root([&](double l) { return f_.value(dual_point(f_, z, l)); },
                                 "quadratic constraint");
    Vector out = x;
    scatter(out, coords_, dual_point(f_, z, lam));
    return out;
  }

 private:
  int dim_;
  std::vector<int> coords_;
  QuadraticForm f_;
};

// ---------------------------------------------------------------------------
// Epigraph h(u) <= t. A quadratic h uses the dual root directly; an oracle h
// nests a strongly convex prox solve (descent with backtracking) inside it.

class EpigraphConstraint final : public Constraint {
 public:
  EpigraphConstraint(int dim, std::vector<int> u_coords, int t_index, QuadraticForm h)
      : dim_(dim),
        u_coords_(std::move(u_coords)),
        t_index_(t_index),
        h_(std::move(h)),
        quadratic_(true) {
    init_coords();
    const auto n = static_cast<Eigen::Index>(u_coords_.size());
    if (h_.Q.size() != 0 && (h_.Q.rows() != n || h_.Q.cols() != n))
      throw DimensionMismatchError("epigraph: Q size does not match block size");
    if (h_.c.size() != n) throw DimensionMismatchError("epigraph: c size does not match block size");
    if (h_.Q.size() != 0) h_.diagonal = h_.Q.isDiagonal(0.0);
  }

  EpigraphConstraint(int dim, std::vector<int> u_coords, int t_index,
                     std::function<double(const Vector&)> value,
                     std::function<Vector(const Vector&)> gradient)
      : dim_(dim),
        u_coords_(std::move(u_coords)),
        t_index_(t_index),
        oracle_value_(std::move(value)),
        oracle_gradient_(std::move(gradient)),
        quadratic_(false) {
    init_coords();
    if (!oracle_value_ || !oracle_gradient_)
      throw InvalidQueryError("epigraph: oracle requires both value and gradient");
  }

  int dim() const override { return dim_; }
  const std::vector<int>& coords() const override { return coords_; }
  bool affine() const override { return false; }

  double residual(const Vector& x) const override {
    return h_value(gather(x, u_coords_)) - x[t_index_];
  }

  // Structure probes for the family projector: a block of quadratic epigraphs
  // over one coordinate block and one level coordinate projects jointly.
  bool quadratic_form() const { return quadratic_; }
  const QuadraticForm& form() const { return h_; }
  const std::vector<int>& u_block() const { return u_coords_; }
  int level_index() const { return t_index_; }

  Vector gradient(const Vector& x) const override {
    Vector g(static_cast<Eigen::Index>(coords_.size()));
    g.head(g.size() - 1) = h_gradient(gather(x, u_coords_));
    g[g.size() - 1] = -1.0;
    return g;
  }

  Vector project(const Vector& x) const override {
    const Vector z = gather(x, u_coords_);
    const double tau = x[t_index_];
    if (h_value(z) - tau <= 0.0) return x;
    double lam = 0.0;
    Vector u;
    if (quadratic_) {
      lam = dual_root([&](double l) { return h_.value(dual_point(h_, z, l)) - tau - l; },
                      "epigraph constraint");
      u = dual_point(h_, z, lam);
    } else {
      Vector warm = z;
      lam = dual_root(
          [&](double l) {
            warm = prox(z, l, warm);
            return h_value(warm) - tau - l;
          },
          "epigraph constraint");
      u = prox(z, lam, warm);
    }
    Vector out = x;
    scatter(out, u_coords_, u);
    out[t_index_] = tau + lam;
    return out;
  }

 private:
  void init_coords() {
    check_coords(u_coords_, dim_, "epigraph");
    if (t_index_ < 0 || t_index_ >= dim_)
      throw DimensionMismatchError("epigraph: t index out of range");
    for (int c : u_coords_)
      if (c == t_index_) throw InvalidQueryError("epigraph: t index may not appear in the block");
    coords_ = u_coords_;
    coords_.push_back(t_index_);
  }

  double h_value(const Vector& u) const { return quadratic_ ? h_.value(u) : oracle_value_(u); }
  Vector h_gradient(const Vector& u) const {
    return quadratic_ ? h_.gradient(u) : oracle_gradient_(u);
  }

  // argmin_u 0.5|u - z|^2 + lam h(u); 1-strongly convex. Oracle path only.
  Vector prox(const Vector& z, double lam, Vector u) const {
    const double grad_tol = 1e-12 * (1.0 + z.norm());
    auto objective = [&](const Vector& v) {
      return 0.5 * (v - z).squaredNorm() + lam * h_value(v);
    };
    double fu = objective(u);
    for (int iter = 0; iter < 600; ++iter) {
      const Vector g = (u - z) + lam * h_gradient(u);
      const double gn2 = g.squaredNorm();
      if (std::sqrt(gn2) <= grad_tol) break;
      double step = 1.0;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Vector trial = u - step * g;
        const double ft = objective(trial);
        if (ft <= fu - 1e-4 * step * gn2) {
          u = trial;
          fu = ft;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    return u;
  }

  int dim_;
  std::vector<int> u_coords_;
  int t_index_;
  std::vector<int> coords_;
  QuadraticForm h_;
  std::function<double(const Vector&)> oracle_value_;
  std::function<Vector(const Vector&)> oracle_gradient_;
  bool quadratic_;
};

// ---------------------------------------------------------------------------
// Polyhedral projection in block-local coordinates: dual active set on
// min 0.5|u-z|^2 s.t. a_i'u <= b_i. Starts unconstrained, adds the most
// violated row, drops rows with negative multipliers. A run that exceeds its
// budget (cycling on degenerate data) reports failure and the caller falls
// back to alternating projections.

struct LocalRows {
  std::vector<Vector> a;  // block-local rows
  Vector b;
};

bool project_polyhedron(const LocalRows& poly, const Vector& z, Vector& out) {
  const int rows = static_cast<int>(poly.a.size());
  const double feas_tol = 1e-12 * (1.0 + z.lpNorm<Eigen::Infinity>());

  Vector u = z;
  std::vector<int> active;
  std::vector<char> in_active(static_cast<std::size_t>(rows), 0);
  const int budget = 60 + 12 * rows;
  for (int iter = 0; iter < budget; ++iter) {
    int worst = -1;
    double worst_v = feas_tol;
    for (int r = 0; r < rows; ++r) {
      if (in_active[static_cast<std::size_t>(r)]) continue;
      const double v = poly.a[static_cast<std::size_t>(r)].dot(u) - poly.b[r];
      if (v > worst_v) {
        worst_v = v;
        worst = r;
      }
    }
    if (worst < 0) {
      // The working-set solves are least-squares, so an inconsistent
      // (infeasible) working set can yield a point that still violates rows
      // inside the set — and the scan above skips exactly those rows. Declare
      // success only when the point satisfies every row; otherwise defer to
      // the alternating-projection fallback, which surfaces infeasibility.
      const double ok_tol = 1e-9 * (1.0 + z.lpNorm<Eigen::Infinity>());
      for (int r = 0; r < rows; ++r) {
        if (poly.a[static_cast<std::size_t>(r)].dot(u) - poly.b[r] > ok_tol) return false;
      }
      out = u;
      return true;
    }
    active.push_back(worst);
    in_active[static_cast<std::size_t>(worst)] = 1;

    // Equality projection onto the working set, dropping negative multipliers
    // until the set is consistent.
    bool solved = false;
    for (int inner = 0; inner < budget; ++inner) {
      const int w = static_cast<int>(active.size());
      if (w == 0) {
        u = z;
        solved = true;
        break;
      }
      Matrix Aw(w, z.size());
      Vector bw(w);
      for (int i = 0; i < w; ++i) {
        Aw.row(i) = poly.a[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])];
        bw[i] = poly.b[active[static_cast<std::size_t>(i)]];
      }
      // Minimum-norm multipliers tolerate duplicated/dependent rows.
      Vector lam = (Aw * Aw.transpose()).completeOrthogonalDecomposition().solve(Aw * z - bw);
      int drop = -1;
      double most_negative = -1e-11;
      for (int i = 0; i < w; ++i)
        if (lam[i] < most_negative) {
          most_negative = lam[i];
          drop = i;
        }
      if (drop >= 0) {
        in_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
        active.erase(active.begin() + drop);
        continue;
      }
      u = z - Aw.transpose() * lam;
      solved = true;
      break;
    }
    if (!solved) return false;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Dykstra's alternating projections over exact projectors on the full vector.

struct DykstraSet {
  std::vector<int> coords;             // coordinates the projector may change
  std::function<void(Vector&)> apply;  // in-place exact projection
};

Vector run_dykstra(const Vector& z, const std::vector<DykstraSet>& sets,
                   const ProjectionControls& pc) {
  Vector x = z;
  std::vector<Vector> corrections(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i)
    corrections[i] = Vector::Zero(static_cast<Eigen::Index>(sets[i].coords.size()));

  Vector prev = x;
  for (long sweep = 0; sweep < pc.max_sweeps; ++sweep) {
    prev = x;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto& coords = sets[i].coords;
      auto& p = corrections[i];
      for (std::size_t j = 0; j < coords.size(); ++j)
        x[coords[j]] += p[static_cast<Eigen::Index>(j)];
      const Vector before = gather(x, coords);
      sets[i].apply(x);
      for (std::size_t j = 0; j < coords.size(); ++j)
        p[static_cast<Eigen::Index>(j)] = before[static_cast<Eigen::Index>(j)] - x[coords[j]];
    }
    if ((x - prev).lpNorm<Eigen::Infinity>() <= pc.tol) {
      // Per-sweep stabilization alone cannot distinguish convergence from the
      // limit cycle of a disjoint intersection, where the corrections absorb
      // a constant gap every sweep. Accept only a point that every projector
      // already (nearly) fixes; otherwise keep sweeping until the budget
      // declares the intersection (near) empty.
      double steady = 0.0;
      for (const auto& set : sets) {
        Vector fixed_probe = x;
        set.apply(fixed_probe);
        steady = std::max(steady, (fixed_probe - x).lpNorm<Eigen::Infinity>());
      }
      if (steady <= 50.0 * pc.tol + 1e-12) return x;
    }
  }
  throw InfeasibleSetError(
      "projection did not stabilize within the sweep budget; the intersection is empty or nearly "
      "so");
}

// Union-find over coordinates.
struct DisjointSets {
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
  std::vector<int> parent;
};

bool is_separable(const Constraint& c) {
  return dynamic_cast<const BoxConstraint*>(&c) != nullptr;
}

// Everything one coordinate block needs to project itself.
struct BlockWork {
  std::vector<int> coords;  // global coordinates, ascending
  LocalRows rows;
  std::vector<const Constraint*> curved;
};

// Row-wise alternating projections in block-local coordinates, the patient
// sibling of the dual active set for polyhedra it declines (degenerate or
// heavily redundant row systems). Reports failure instead of throwing so the
// caller can choose the next strategy.
bool dykstra_rows(const LocalRows& rows, const Vector& z, const ProjectionControls& pc,
                  Vector& out) {
  const std::size_t m = rows.a.size();
  Vector x = z;
  Matrix corrections = Matrix::Zero(static_cast<Eigen::Index>(m), z.size());
  const double scale = 1.0 + z.lpNorm<Eigen::Infinity>();
  for (long sweep = 0; sweep < pc.max_sweeps; ++sweep) {
    const Vector prev = x;
    for (std::size_t r = 0; r < m; ++r) {
      const Vector y = x + corrections.row(static_cast<Eigen::Index>(r)).transpose();
      const double viol = rows.a[r].dot(y) - rows.b[static_cast<Eigen::Index>(r)];
      x = viol > 0.0 ? Vector(y - (viol / rows.a[r].squaredNorm()) * rows.a[r]) : y;
      corrections.row(static_cast<Eigen::Index>(r)) = (y - x).transpose();
    }
    if ((x - prev).lpNorm<Eigen::Infinity>() <= pc.tol) {
      double worst = 0.0;
      for (std::size_t r = 0; r < m; ++r)
        worst = std::max(worst, rows.a[r].dot(x) - rows.b[static_cast<Eigen::Index>(r)]);
      if (worst <= 50.0 * pc.tol * scale + 1e-12) {
        out = x;
        return true;
      }
    }
  }
  return false;
}

// Projection of the block of x by outer linearization: project onto the
// accumulated polyhedral relaxation, then cut the smooth constraints the
// iterate violates most with their supporting halfspaces at the iterate.
// Convexity keeps every cut valid — the true set is never trimmed — so the
// iterates approach the exact projection from outside and the loop exits once
// the point is feasible to tolerance. Unlike the alternating fallback, the
// rate does not degrade when many smooth surfaces meet at vanishing angles
// (epigraphs of clustered scenario costs). Cuts arrive a few per round
// because dumping every violated linearization at once buries the relaxation
// in near-parallel rows. Returns false (leaving x untouched) when a
// constraint offers no gradient or the budgets run out; the caller falls back.
bool project_block_cuts(Vector& x, const BlockWork& blk, const ProjectionControls& pc) {
  const auto nb = static_cast<Eigen::Index>(blk.coords.size());
  std::unordered_map<int, Eigen::Index> local;
  local.reserve(blk.coords.size());
  for (std::size_t i = 0; i < blk.coords.size(); ++i)
    local.emplace(blk.coords[i], static_cast<Eigen::Index>(i));

  const Vector z_loc = gather(x, blk.coords);
  const double feas_tol = pc.tol * (1.0 + z_loc.lpNorm<Eigen::Infinity>());
  constexpr int kMaxRounds = 120;
  constexpr std::size_t kCutsPerRound = 16;

  LocalRows rows = blk.rows;
  Vector probe = x;
  std::vector<std::pair<double, const Constraint*>> violated;
  for (int round = 0; round < kMaxRounds; ++round) {
    Vector u;
    if (!project_polyhedron(rows, z_loc, u) && !dykstra_rows(rows, z_loc, pc, u)) return false;
    scatter(probe, blk.coords, u);
    violated.clear();
    double worst = 0.0;
    for (const Constraint* c : blk.curved) {
      const double g = c->residual(probe);
      worst = std::max(worst, g);
      if (g > feas_tol) violated.emplace_back(g, c);
    }
    if (worst <= feas_tol) {
      scatter(x, blk.coords, u);
      return true;
    }
    const std::size_t take = std::min(kCutsPerRound, violated.size());
    std::partial_sort(violated.begin(), violated.begin() + static_cast<std::ptrdiff_t>(take),
                      violated.end(), [](const auto& lhs, const auto& rhs) {
                        return lhs.first > rhs.first;
                      });
    for (std::size_t v = 0; v < take; ++v) {
      const Constraint* c = violated[v].second;
      const Vector grad = c->gradient(probe);
      if (grad.size() == 0) return false;
      Vector a = Vector::Zero(nb);
      const auto& cc = c->coords();
      for (std::size_t i = 0; i < cc.size(); ++i)
        a[local.at(cc[i])] = grad[static_cast<Eigen::Index>(i)];
      const double norm = a.norm();
      if (!(norm > 1e-12)) return false;  // flat at a violated point: leave to the fallback
      rows.a.push_back(a / norm);
      const Eigen::Index m = rows.b.size();
      rows.b.conservativeResize(m + 1);
      rows.b[m] = (a.dot(u) - violated[v].first) / norm;
    }
  }
  return false;
}

// Joint projection for a block whose curved pieces are quadratic epigraphs of
// one family — a shared coordinate block, a shared level coordinate, and one
// common curvature, the shape the lifted game reformulation produces in bulk.
// Dualizing the single coupling constraint max_i h_i(u) <= t turns the
// projection of (z, s) into a one-dimensional root-find: for a multiplier
// lam >= 0,
//
//   u(lam) = argmin_{u in P} 0.5|u - z|^2 + lam * max_i h_i(u)
//
// is an exact piecewise QP (the shared curvature folds into the quadratic
// term, leaving affine pieces), t(lam) = s + lam, and psi(lam) =
// max_i h_i(u(lam)) - s - lam is strictly decreasing — the same argument the
// single-epigraph projector uses, lifted over the polytope. Cut generation
// never enters, so clustered scenario costs cost nothing extra. Returns false
// when the block lacks the structure or the inner QP declines; x is then
// untouched and the caller moves down the fallback chain.
bool project_block_epigraph_family(Vector& x, const BlockWork& blk, const ProjectionControls& pc) {
  if (blk.curved.empty()) return false;
  std::vector<const EpigraphConstraint*> family;
  family.reserve(blk.curved.size());
  for (const Constraint* c : blk.curved) {
    const auto* e = dynamic_cast<const EpigraphConstraint*>(c);
    if (!e || !e->quadratic_form()) return false;
    family.push_back(e);
  }
  const EpigraphConstraint* head = family.front();
  const std::vector<int>& u_coords = head->u_block();
  const int t_index = head->level_index();
  const Matrix& Q0 = head->form().Q;
  const double q_scale = Q0.size() == 0 ? 1.0 : 1.0 + Q0.cwiseAbs().maxCoeff();
  for (const EpigraphConstraint* e : family) {
    if (e->level_index() != t_index || e->u_block() != u_coords) return false;
    const Matrix& Qi = e->form().Q;
    if (Qi.size() != Q0.size()) return false;
    if (Q0.size() != 0 && (Qi - Q0).cwiseAbs().maxCoeff() > 1e-12 * q_scale) return false;
  }
  if (blk.coords.size() != u_coords.size() + 1) return false;

  // The level coordinate must be free of polytope rows, so the polyhedron
  // lives entirely in the u frame.
  std::unordered_map<int, Eigen::Index> local;
  local.reserve(blk.coords.size());
  for (std::size_t i = 0; i < blk.coords.size(); ++i)
    local.emplace(blk.coords[i], static_cast<Eigen::Index>(i));
  const Eigen::Index lt = local.at(t_index);
  for (const Vector& row : blk.rows.a)
    if (row[lt] != 0.0) return false;

  const auto nu = static_cast<Eigen::Index>(u_coords.size());
  std::vector<Eigen::Index> upos(u_coords.size());
  for (std::size_t i = 0; i < u_coords.size(); ++i) upos[i] = local.at(u_coords[i]);

  LocalRows urows;
  urows.a.reserve(blk.rows.a.size());
  urows.b = blk.rows.b;
  for (const Vector& row : blk.rows.a) {
    Vector a(nu);
    for (Eigen::Index i = 0; i < nu; ++i) a[i] = row[upos[static_cast<std::size_t>(i)]];
    urows.a.push_back(std::move(a));
  }

  const Vector z_u = gather(x, u_coords);
  const double s = x[t_index];
  const double feas_tol = pc.tol * (1.0 + std::max(z_u.lpNorm<Eigen::Infinity>(), std::abs(s)));

  const auto level_of = [&family](const Vector& u) {
    double worst = -kInf;
    for (const EpigraphConstraint* e : family) worst = std::max(worst, e->form().value(u));
    return worst;
  };

  // lam = 0: the plain polytope projection may already sit under the level.
  Vector u0;
  if (!project_polyhedron(urows, z_u, u0) && !dykstra_rows(urows, z_u, pc, u0)) return false;
  if (level_of(u0) - s <= feas_tol) {
    scatter(x, u_coords, u0);
    x[t_index] = s;
    return true;
  }

  qp::PiecewiseQP qp;
  qp.c = -z_u;
  qp.A = Matrix::Zero(static_cast<Eigen::Index>(urows.a.size()), nu);
  for (std::size_t r = 0; r < urows.a.size(); ++r)
    qp.A.row(static_cast<Eigen::Index>(r)) = urows.a[r].transpose();
  qp.b = urows.b;
  qp.E = Matrix::Zero(0, nu);
  qp.f = Vector::Zero(0);
  Matrix piece_a(static_cast<Eigen::Index>(family.size()), nu);
  Vector piece_b(static_cast<Eigen::Index>(family.size()));
  for (std::size_t i = 0; i < family.size(); ++i) {
    piece_a.row(static_cast<Eigen::Index>(i)) = family[i]->form().c.transpose();
    piece_b[static_cast<Eigen::Index>(i)] = family[i]->form().d;
  }
  // The start points come from the exact QP (machine-accurate) or the
  // alternating fallback (accurate to its steady-state acceptance), so the
  // feasibility gate must admit the looser of the two.
  const double qp_feas_tol = std::max(1e-9, 100.0 * feas_tol);

  Vector warm = u0;
  const auto psi = [&](double lam) {
    qp.D = Matrix::Identity(nu, nu);
    if (Q0.size() != 0) qp.D += lam * Q0;
    qp.piece_a = lam * piece_a;
    qp.piece_b = lam * piece_b;
    warm = qp::solve_piecewise_qp(qp, warm, qp_feas_tol).x;
    return level_of(warm) - s - lam;
  };
  double lam = 0.0;
  try {
    lam = dual_root(psi, "epigraph family");
    psi(lam);  // dual_root's last evaluation need not be at the root it returns
  } catch (const Error&) {
    return false;
  }
  scatter(x, u_coords, warm);
  x[t_index] = s + lam;
  return true;
}

void project_block(Vector& x, const BlockWork& blk, const ProjectionControls& pc) {
  // Polyhedral part: dual active set, with alternating projections over the
  // individual rows as the fallback for degenerate runs.
  auto polytope_apply = [&blk, &pc](Vector& full) {
    const Vector z_loc = gather(full, blk.coords);
    Vector projected;
    if (project_polyhedron(blk.rows, z_loc, projected)) {
      scatter(full, blk.coords, projected);
      return;
    }
    std::vector<DykstraSet> row_sets;
    for (std::size_t r = 0; r < blk.rows.a.size(); ++r) {
      DykstraSet s;
      std::vector<Eigen::Index> local_idx;
      for (Eigen::Index i = 0; i < blk.rows.a[r].size(); ++i)
        if (blk.rows.a[r][i] != 0.0) {
          s.coords.push_back(blk.coords[static_cast<std::size_t>(i)]);
          local_idx.push_back(i);
        }
      Vector a(static_cast<Eigen::Index>(local_idx.size()));
      for (std::size_t i = 0; i < local_idx.size(); ++i)
        a[static_cast<Eigen::Index>(i)] = blk.rows.a[r][local_idx[i]];
      const double b = blk.rows.b[static_cast<Eigen::Index>(r)];
      const double n2 = a.squaredNorm();
      const std::vector<int> coords = s.coords;
      s.apply = [a, b, n2, coords](Vector& v) {
        double dot = 0.0;
        for (std::size_t i = 0; i < coords.size(); ++i)
          dot += a[static_cast<Eigen::Index>(i)] * v[coords[i]];
        const double viol = dot - b;
        if (viol > 0.0)
          for (std::size_t i = 0; i < coords.size(); ++i)
            v[coords[i]] -= (viol / n2) * a[static_cast<Eigen::Index>(i)];
      };
      row_sets.push_back(std::move(s));
    }
    full = run_dykstra(full, row_sets, pc);
  };

  if (blk.curved.empty()) {
    polytope_apply(x);
    return;
  }
  if (blk.rows.a.empty() && blk.curved.size() == 1) {
    x = blk.curved.front()->project(x);
    return;
  }
  if (project_block_epigraph_family(x, blk, pc)) return;
  if (project_block_cuts(x, blk, pc)) return;

  std::vector<DykstraSet> sets;
  if (!blk.rows.a.empty()) {
    DykstraSet s;
    s.coords = blk.coords;
    s.apply = polytope_apply;
    sets.push_back(std::move(s));
  }
  for (const auto* c : blk.curved) {
    DykstraSet s;
    s.coords = c->coords();
    s.apply = [c](Vector& v) { v = c->project(v); };
    sets.push_back(std::move(s));
  }
  x = run_dykstra(x, sets, pc);
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvexSet

ConvexSet::ConvexSet(int dim) : dim_(dim) {
  if (dim < 1) throw InvalidQueryError("convex set: dimension must be positive");
}

ConvexSet& ConvexSet::add_halfspace(const Vector& a, double b) {
  if (a.size() != dim_) throw DimensionMismatchError("halfspace: normal has wrong dimension");
  return add_halfspace(full_range(dim_), a, b);
}

ConvexSet& ConvexSet::add_halfspace(std::vector<int> coords, const Vector& a, double b) {
  return add_constraint(std::make_shared<HalfspaceConstraint>(dim_, std::move(coords), a, b));
}

ConvexSet& ConvexSet::add_box(const Vector& lo, const Vector& hi) {
  if (lo.size() != dim_ || hi.size() != dim_)
    throw DimensionMismatchError("box: bounds have wrong dimension");
  return add_box(full_range(dim_), lo, hi);
}

ConvexSet& ConvexSet::add_box(std::vector<int> coords, const Vector& lo, const Vector& hi) {
  return add_constraint(std::make_shared<BoxConstraint>(dim_, std::move(coords), lo, hi));
}

ConvexSet& ConvexSet::add_quadratic(const Matrix& Q, const Vector& c, double b) {
  if (Q.rows() != dim_ || Q.cols() != dim_ || c.size() != dim_)
    throw DimensionMismatchError("quadratic: Q/c have wrong dimension");
  return add_quadratic(full_range(dim_), Q, c, b);
}

ConvexSet& ConvexSet::add_quadratic(std::vector<int> coords, const Matrix& Q, const Vector& c,
                                    double b) {
  QuadraticForm f{Q, c, -b, false};
  return add_constraint(
      std::make_shared<QuadraticConstraint>(dim_, std::move(coords), std::move(f)));
}

ConvexSet& ConvexSet::add_epigraph(std::vector<int> u_coords, int t_index, QuadraticForm h) {
  return add_constraint(
      std::make_shared<EpigraphConstraint>(dim_, std::move(u_coords), t_index, std::move(h)));
}

ConvexSet& ConvexSet::add_epigraph(std::vector<int> u_coords, int t_index,
                                   std::function<double(const Vector&)> h_value,
                                   std::function<Vector(const Vector&)> h_gradient) {
  return add_constraint(std::make_shared<EpigraphConstraint>(
      dim_, std::move(u_coords), t_index, std::move(h_value), std::move(h_gradient)));
}

ConvexSet& ConvexSet::add_constraint(ConstraintPtr constraint) {
  if (dim_ == 0) throw InvalidQueryError("convex set: construct with a dimension first");
  if (!constraint) throw InvalidQueryError("convex set: null constraint");
  if (constraint->dim() != dim_)
    throw DimensionMismatchError("constraint dimension does not match set dimension");
  constraints_.push_back(std::move(constraint));
  return *this;
}

ConvexSet& ConvexSet::absorb(const ConvexSet& other) {
  if (other.dim_ != dim_) throw DimensionMismatchError("absorb: set dimensions differ");
  constraints_.insert(constraints_.end(), other.constraints_.begin(), other.constraints_.end());
  return *this;
}

bool ConvexSet::contains(const Vector& x, double tol) const {
  if (x.size() != dim_) throw DimensionMismatchError("contains: point has wrong dimension");
  for (const auto& c : constraints_)
    if (c->residual(x) > tol) return false;
  return true;
}

double ConvexSet::violation(const Vector& x) const {
  if (x.size() != dim_) throw DimensionMismatchError("violation: point has wrong dimension");
  double worst = 0.0;
  for (const auto& c : constraints_) worst = std::max(worst, c->residual(x));
  return worst;
}

Vector ConvexSet::project(const Vector& x, const ProjectionControls& pc) const {
  if (x.size() != dim_) throw DimensionMismatchError("project: point has wrong dimension");
  if (constraints_.empty() || violation(x) <= 0.0) return x;
  if (constraints_.size() == 1) return constraints_.front()->project(x);

  // Independent coordinate blocks project separately.
  DisjointSets uf(dim_);
  for (const auto& c : constraints_) {
    if (is_separable(*c)) continue;
    const auto& cs = c->coords();
    for (std::size_t i = 1; i < cs.size(); ++i) uf.unite(cs[0], cs[i]);
  }

  std::unordered_map<int, std::size_t> slot_of_root;
  std::vector<BlockWork> blocks;
  std::vector<std::vector<Vector>> block_rows;
  std::vector<std::vector<double>> block_rows_b;
  auto slot_for = [&](int coord) {
    const int root = uf.find(coord);
    auto it = slot_of_root.find(root);
    if (it != slot_of_root.end()) return it->second;
    const std::size_t slot = blocks.size();
    slot_of_root.emplace(root, slot);
    blocks.emplace_back();
    block_rows.emplace_back();
    block_rows_b.emplace_back();
    return slot;
  };

  // Curved constraints live entirely inside one block; affine rows are routed
  // by their support (a box row touches a single coordinate).
  std::vector<Vector> rows_a;
  std::vector<double> rows_b;
  for (const auto& c : constraints_) {
    if (!c->affine()) {
      blocks[slot_for(c->coords().front())].curved.push_back(c.get());
      continue;
    }
    rows_a.clear();
    rows_b.clear();
    c->affine_rows(rows_a, rows_b);
    for (std::size_t r = 0; r < rows_a.size(); ++r) {
      int first = -1;
      for (Eigen::Index i = 0; i < rows_a[r].size(); ++i)
        if (rows_a[r][i] != 0.0) {
          first = static_cast<int>(i);
          break;
        }
      if (first < 0) {
        if (rows_b[r] < 0.0)
          throw InfeasibleSetError("affine constraint with zero row is violated");
        continue;
      }
      const std::size_t slot = slot_for(first);
      block_rows[slot].push_back(std::move(rows_a[r]));
      block_rows_b[slot].push_back(rows_b[r]);
    }
  }

  // Fill in each block's coordinate list.
  for (int i = 0; i < dim_; ++i) {
    const auto it = slot_of_root.find(uf.find(i));
    if (it != slot_of_root.end()) blocks[it->second].coords.push_back(i);
  }

  Vector out = x;
  std::vector<int> g2l(static_cast<std::size_t>(dim_), -1);
  for (std::size_t slot = 0; slot < blocks.size(); ++slot) {
    auto& blk = blocks[slot];
    if (blk.coords.empty()) continue;

    // Localize this block's rows.
    for (std::size_t i = 0; i < blk.coords.size(); ++i)
      g2l[static_cast<std::size_t>(blk.coords[i])] = static_cast<int>(i);
    const auto m = static_cast<Eigen::Index>(blk.coords.size());
    for (const auto& row : block_rows[slot]) {
      Vector local = Vector::Zero(m);
      for (Eigen::Index i = 0; i < row.size(); ++i)
        if (row[i] != 0.0) local[g2l[static_cast<std::size_t>(i)]] = row[i];
      blk.rows.a.push_back(std::move(local));
    }
    blk.rows.b = Eigen::Map<const Vector>(block_rows_b[slot].data(),
                                          static_cast<Eigen::Index>(block_rows_b[slot].size()));

    // Skip blocks that are already feasible at the current point.
    const Vector z_loc = gather(out, blk.coords);
    bool feasible = true;
    for (std::size_t r = 0; r < blk.rows.a.size(); ++r)
      if (blk.rows.a[r].dot(z_loc) > blk.rows.b[static_cast<Eigen::Index>(r)]) {
        feasible = false;
        break;
      }
    if (feasible)
      for (const auto* c : blk.curved)
        if (c->residual(out) > 0.0) {
          feasible = false;
          break;
        }
    if (!feasible) project_block(out, blk, pc);
  }
  return out;
}

ConvexSet intersection(const std::vector<const ConvexSet*>& parts) {
  if (parts.empty()) throw InvalidQueryError("intersection: need at least one set");
  ConvexSet out(parts.front()->dim());
  for (const auto* p : parts) out.absorb(*p);
  return out;
}

}  // namespace svi::convex_sets
