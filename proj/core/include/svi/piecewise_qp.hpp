#pragma once

#include <vector>

#include "svi/types.hpp"

namespace svi::qp {

// Exact minimization of a strongly convex quadratic plus a pointwise maximum
// of affine pieces over a polyhedron:
//
//   minimize   1/2 x'D x + c'x + max_i (a_i'x + b_i)
//   subject to A x <= b,  E x = f.
//
// Solved in epigraph form (variables x and the scalar epigraph level s) by a
// primal active-set method. The multipliers on the pieces sum to one at any
// stationary point, so at least one piece stays active throughout and the
// reduced Hessian remains positive definite; the method terminates finitely
// at the exact minimizer. Problems here are small (tens of variables, a few
// hundred rows), which the dense factorizations assume.
struct PiecewiseQP {
  Matrix D;  // n x n symmetric positive definite
  Vector c;  // length n
  Matrix A;  // m x n inequality rows (may have zero rows)
  Vector b;  // length m
  Matrix E;  // p x n equality rows (may have zero rows)
  Vector f;  // length p
  Matrix piece_a;  // P x n, one affine piece per row; P >= 1
  Vector piece_b;  // length P
};

struct PiecewiseQPResult {
  Vector x;
  double value = 0.0;  // objective at x (equals the epigraph level)
  long iterations = 0;
  std::vector<int> active_pieces;  // indices of pieces active at the solution, ascending
};

// `x0` must satisfy the polyhedron constraints (to within `feas_tol` on each
// row); the epigraph level starts at the pointwise maximum there. Throws
// InvalidQueryError on malformed input and Error("qp-budget-exceeded") if the
// active-set loop fails to finish within its iteration budget.
PiecewiseQPResult solve_piecewise_qp(const PiecewiseQP& problem, const Vector& x0,
                                     double feas_tol = 1e-9);

}  // namespace svi::qp
