#include "svi/piecewise_qp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "svi/errors.hpp"

namespace svi::qp {

namespace {

// Working-set row: equality rows enter once and never leave; inequality and
// piece rows are added by ratio tests and dropped on negative multipliers.
struct Row {
  enum class Kind { equality, inequality, piece } kind;
  int index;  // row index within its own family
};

}  // namespace

PiecewiseQPResult solve_piecewise_qp(const PiecewiseQP& qp, const Vector& x0, double feas_tol) {
  const long n = qp.D.rows();
  const long m = qp.A.rows();
  const long p = qp.E.rows();
  const long pieces = qp.piece_a.rows();
  if (n == 0 || qp.D.cols() != n || qp.c.size() != n) {
    throw InvalidQueryError("quadratic term and linear term must agree on the dimension");
  }
  if ((m > 0 && qp.A.cols() != n) || qp.b.size() != m || (p > 0 && qp.E.cols() != n) ||
      qp.f.size() != p || qp.piece_a.cols() != n || qp.piece_b.size() != pieces) {
    throw DimensionMismatchError("constraint blocks disagree with the variable dimension");
  }
  if (pieces < 1) throw InvalidQueryError("at least one affine piece is required");
  if (x0.size() != n) {
    throw DimensionMismatchError("start point has dimension " + std::to_string(x0.size()) +
                                 ", problem expects " + std::to_string(n));
  }
  for (long r = 0; r < m; ++r) {
    if (qp.A.row(r).dot(x0) > qp.b[r] + feas_tol * (1.0 + std::abs(qp.b[r]))) {
      throw InvalidQueryError("start point violates inequality row " + std::to_string(r));
    }
  }
  for (long r = 0; r < p; ++r) {
    if (std::abs(qp.E.row(r).dot(x0) - qp.f[r]) > feas_tol * (1.0 + std::abs(qp.f[r]))) {
      throw InvalidQueryError("start point violates equality row " + std::to_string(r));
    }
  }

  // Epigraph variables v = (x, s).
  const long nv = n + 1;
  Vector v(nv);
  v.head(n) = x0;
  Vector gaps = qp.piece_a * x0 + qp.piece_b;  // piece values at x
  long top = 0;
  gaps.maxCoeff(&top);
  v[n] = gaps[top];

  std::vector<Row> working;
  working.reserve(static_cast<std::size_t>(p + n + 2));
  for (long r = 0; r < p; ++r) working.push_back({Row::Kind::equality, static_cast<int>(r)});
  working.push_back({Row::Kind::piece, static_cast<int>(top)});
  std::vector<char> in_ineq(static_cast<std::size_t>(m), 0);
  std::vector<char> in_piece(static_cast<std::size_t>(pieces), 0);
  in_piece[static_cast<std::size_t>(top)] = 1;

  const auto row_normal = [&](const Row& row) {
    Vector g = Vector::Zero(nv);
    switch (row.kind) {
      case Row::Kind::equality: g.head(n) = qp.E.row(row.index); break;
      case Row::Kind::inequality: g.head(n) = qp.A.row(row.index); break;
      case Row::Kind::piece:
        g.head(n) = qp.piece_a.row(row.index);
        g[n] = -1.0;
        break;
    }
    return g;
  };

  const long budget = 3 * (m + pieces + p + 2) + 30;
  long iter = 0;
  const double scale = 1.0 + std::abs(v[n]) + x0.norm();

  for (; iter < budget; ++iter) {
    // Equality-constrained subproblem on the working set: KKT system solved
    // with a rank-revealing decomposition so redundant rows stay harmless
    // (the step is unique; multipliers come out minimum-norm).
    const long w = static_cast<long>(working.size());
    Matrix kkt = Matrix::Zero(nv + w, nv + w);
    kkt.topLeftCorner(n, n) = qp.D;
    Vector grad(nv);
    grad.head(n) = qp.D * v.head(n) + qp.c;
    grad[n] = 1.0;
    for (long r = 0; r < w; ++r) {
      const Vector g = row_normal(working[static_cast<std::size_t>(r)]);
      kkt.block(nv + r, 0, 1, nv) = g.transpose();
      kkt.block(0, nv + r, nv, 1) = g;
    }
    Vector rhs = Vector::Zero(nv + w);
    rhs.head(nv) = -grad;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
    const Vector sol = cod.solve(rhs);
    const Vector d = sol.head(nv);

    if (d.lpNorm<Eigen::Infinity>() <= 1e-11 * scale) {
      // Stationary on the working set; check multiplier signs.
      double worst = -1e-10 * scale;
      long drop = -1;
      for (long r = 0; r < w; ++r) {
        const Row& row = working[static_cast<std::size_t>(r)];
        if (row.kind == Row::Kind::equality) continue;
        const double lambda = sol[nv + r];
        if (lambda < worst) {
          worst = lambda;
          drop = r;
        }
      }
      if (drop < 0) break;  // optimal
      const Row& gone = working[static_cast<std::size_t>(drop)];
      if (gone.kind == Row::Kind::inequality) {
        in_ineq[static_cast<std::size_t>(gone.index)] = 0;
      } else {
        in_piece[static_cast<std::size_t>(gone.index)] = 0;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Ratio test against rows outside the working set.
    double alpha = 1.0;
    Row blocking{Row::Kind::inequality, -1};
    const Vector dx = d.head(n);
    const double ds = d[n];
    for (long r = 0; r < m; ++r) {
      if (in_ineq[static_cast<std::size_t>(r)]) continue;
      const double rate = qp.A.row(r).dot(dx);
      if (rate <= 1e-13 * scale) continue;
      const double slack = qp.b[r] - qp.A.row(r).dot(v.head(n));
      const double step = std::max(0.0, slack) / rate;
      if (step < alpha - 1e-14) {
        alpha = step;
        blocking = {Row::Kind::inequality, static_cast<int>(r)};
      }
    }
    for (long r = 0; r < pieces; ++r) {
      if (in_piece[static_cast<std::size_t>(r)]) continue;
      const double rate = qp.piece_a.row(r).dot(dx) - ds;
      if (rate <= 1e-13 * scale) continue;
      const double slack = v[n] - qp.piece_a.row(r).dot(v.head(n)) - qp.piece_b[r];
      const double step = std::max(0.0, slack) / rate;
      if (step < alpha - 1e-14) {
        alpha = step;
        blocking = {Row::Kind::piece, static_cast<int>(r)};
      }
    }

    v += alpha * d;
    if (blocking.index >= 0) {
      working.push_back(blocking);
      if (blocking.kind == Row::Kind::inequality) {
        in_ineq[static_cast<std::size_t>(blocking.index)] = 1;
      } else {
        in_piece[static_cast<std::size_t>(blocking.index)] = 1;
      }
    }
  }
  if (iter >= budget) {
    throw Error("qp-budget-exceeded",
                "active-set iteration budget exhausted (" + std::to_string(budget) + " steps)");
  }

  PiecewiseQPResult out;
  out.x = v.head(n);
  out.iterations = iter + 1;
  // Report the active pieces from the geometry rather than the working set so
  // ties that never entered the working set are still listed.
  const Vector vals = qp.piece_a * out.x + qp.piece_b;
  const double peak = vals.maxCoeff();
  out.value = 0.5 * out.x.dot(qp.D * out.x) + qp.c.dot(out.x) + peak;
  for (long r = 0; r < pieces; ++r) {
    if (vals[r] >= peak - 1e-9 * (1.0 + std::abs(peak))) {
      out.active_pieces.push_back(static_cast<int>(r));
    }
  }
  return out;
}

}  // namespace svi::qp
