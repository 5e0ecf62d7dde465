#pragma once

#include "tubempc/solver.hpp"

namespace tubempc::solver::detail {

/// Internal minimization form shared by the backends:
///   min ½xᵀPx + qᵀx  s.t.  Gx ≤ h,  Ax = b.
/// The first `user_ineq_rows` rows of G are the caller's inequality rows;
/// variable bounds follow.
struct Canonical {
  SparseMatrix P;
  Eigen::VectorXd q;
  SparseMatrix G;
  Eigen::VectorXd h;
  SparseMatrix A;
  Eigen::VectorXd b;
  int user_ineq_rows = 0;
  /// +1 for minimization, -1 for a maximization rewritten as a minimization.
  double sign = 1.0;

  int n() const { return static_cast<int>(q.size()); }
  int mi() const { return static_cast<int>(h.size()); }
  int me() const { return static_cast<int>(b.size()); }
  bool has_quadratic() const { return P.nonZeros() > 0; }
};

Canonical canonicalize(const LpProblem& problem);
Canonical canonicalize(const QpProblem& problem);

/// Runs the interior-point method with infeasibility / unboundedness
/// diagnosis and maps the answer back to the caller's sense.
SolveResult solve_interior_point(const Canonical& problem, const InteriorPointOptions& options);

/// Solves the canonical problem (P must be zero) with the dense simplex.
SolveResult solve_dense_simplex(const Canonical& problem, int max_iterations);

}  // namespace tubempc::solver::detail
