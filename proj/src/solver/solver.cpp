#include "tubempc/solver.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <vector>

#include "canonical.hpp"
#include "tubempc/error.hpp"

namespace tubempc::solver {

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

bool all_finite(const SparseMatrix& m) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      if (!std::isfinite(it.value())) return false;
    }
  }
  return true;
}

// An empty (0×0) matrix stands for "no rows".
void check_block(const SparseMatrix& m, const Eigen::VectorXd& rhs, int n, const char* what) {
  if (m.rows() == 0 && m.cols() == 0 && rhs.size() == 0) return;
  if (m.cols() != n || m.rows() != rhs.size()) {
    throw Error(ErrorKind::kDimension, std::string(what) + ": dimensions inconsistent with variable count");
  }
  if (!all_finite(m) || !all_finite(rhs)) {
    throw Error(ErrorKind::kValidation, std::string(what) + ": non-finite entries");
  }
}

SparseMatrix rows_or_empty(const SparseMatrix& m, int n) {
  if (m.rows() == 0) return SparseMatrix(0, n);
  return m;
}

}  // namespace

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "Optimal";
    case SolveStatus::kInfeasible: return "Infeasible";
    case SolveStatus::kUnbounded: return "Unbounded";
    case SolveStatus::kNumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

void LpProblem::validate() const {
  const int n = num_variables();
  if (n == 0) throw Error(ErrorKind::kDimension, "LP has no variables");
  if (!objective.allFinite()) throw Error(ErrorKind::kValidation, "LP objective has non-finite entries");
  check_block(A_ineq, b_ineq, n, "LP inequality block");
  check_block(A_eq, b_eq, n, "LP equality block");
  if (lower.size() != 0 && lower.size() != n) throw Error(ErrorKind::kDimension, "LP lower bound size");
  if (upper.size() != 0 && upper.size() != n) throw Error(ErrorKind::kDimension, "LP upper bound size");
  for (int j = 0; j < lower.size(); ++j) {
    if (std::isnan(lower[j]) || lower[j] == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::kValidation, "LP lower bound is NaN or +inf");
    }
  }
  for (int j = 0; j < upper.size(); ++j) {
    if (std::isnan(upper[j]) || upper[j] == -std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::kValidation, "LP upper bound is NaN or -inf");
    }
  }
}

void QpProblem::validate() const {
  const int n = num_variables();
  if (n == 0) throw Error(ErrorKind::kDimension, "QP has no variables");
  if (!q.allFinite()) throw Error(ErrorKind::kValidation, "QP linear cost has non-finite entries");
  if (P.rows() != 0 || P.cols() != 0) {
    if (P.rows() != n || P.cols() != n) throw Error(ErrorKind::kDimension, "QP cost matrix must be n×n");
    if (!all_finite(P)) throw Error(ErrorKind::kValidation, "QP cost matrix has non-finite entries");
    const SparseMatrix asym = SparseMatrix(P.transpose()) - P;
    for (int k = 0; k < asym.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(asym, k); it; ++it) {
        if (std::abs(it.value()) > 1e-10) throw Error(ErrorKind::kValidation, "QP cost matrix is not symmetric");
      }
    }
    // PSD within -1e-9: LDLᵀ of the shifted matrix must have a nonnegative
    // diagonal.
    SparseMatrix shifted = P;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += 1e-9;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < 0.0) {
      throw Error(ErrorKind::kValidation, "QP cost matrix is not positive semidefinite");
    }
  }
  check_block(A_ineq, b_ineq, n, "QP inequality block");
  check_block(A_eq, b_eq, n, "QP equality block");
}

SparseMatrix to_sparse(const Eigen::MatrixXd& dense) {
  SparseMatrix m = dense.sparseView(0.0, 0.0);
  m.makeCompressed();
  return m;
}

namespace detail {

Canonical canonicalize(const LpProblem& problem) {
  problem.validate();
  const int n = problem.num_variables();
  Canonical c;
  c.sign = problem.sense == Sense::kMaximize ? -1.0 : 1.0;
  c.q = c.sign * problem.objective;
  c.P = SparseMatrix(n, n);

  const SparseMatrix user = rows_or_empty(problem.A_ineq, n);
  c.user_ineq_rows = static_cast<int>(user.rows());

  std::vector<Eigen::Triplet<double>> bound_rows;
  std::vector<double> bound_rhs;
  int row = 0;
  for (int j = 0; j < problem.lower.size(); ++j) {
    if (std::isfinite(problem.lower[j])) {
      bound_rows.emplace_back(row++, j, -1.0);
      bound_rhs.push_back(-problem.lower[j]);
    }
  }
  for (int j = 0; j < problem.upper.size(); ++j) {
    if (std::isfinite(problem.upper[j])) {
      bound_rows.emplace_back(row++, j, 1.0);
      bound_rhs.push_back(problem.upper[j]);
    }
  }
  SparseMatrix bounds(row, n);
  bounds.setFromTriplets(bound_rows.begin(), bound_rows.end());

  c.G.resize(user.rows() + row, n);
  std::vector<Eigen::Triplet<double>> g;
  g.reserve(user.nonZeros() + bound_rows.size());
  for (int k = 0; k < user.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(user, k); it; ++it) g.emplace_back(it.row(), it.col(), it.value());
  }
  for (const auto& t : bound_rows) g.emplace_back(t.row() + user.rows(), t.col(), t.value());
  c.G.setFromTriplets(g.begin(), g.end());
  c.G.makeCompressed();

  c.h.resize(user.rows() + row);
  if (user.rows() > 0) c.h.head(user.rows()) = problem.b_ineq;
  for (int i = 0; i < row; ++i) c.h[user.rows() + i] = bound_rhs[i];

  c.A = rows_or_empty(problem.A_eq, n);
  c.b = problem.b_eq.size() == 0 ? Eigen::VectorXd(0) : problem.b_eq;
  return c;
}

Canonical canonicalize(const QpProblem& problem) {
  problem.validate();
  const int n = problem.num_variables();
  Canonical c;
  c.sign = 1.0;
  c.q = problem.q;
  c.P = (problem.P.rows() == 0) ? SparseMatrix(n, n) : problem.P;
  c.G = rows_or_empty(problem.A_ineq, n);
  c.h = problem.b_ineq.size() == 0 ? Eigen::VectorXd(0) : problem.b_ineq;
  c.user_ineq_rows = static_cast<int>(c.h.size());
  c.A = rows_or_empty(problem.A_eq, n);
  c.b = problem.b_eq.size() == 0 ? Eigen::VectorXd(0) : problem.b_eq;
  return c;
}

}  // namespace detail

SolveResult InteriorPointSolver::solve_lp(const LpProblem& problem) const {
  return detail::solve_interior_point(detail::canonicalize(problem), options_);
}

SolveResult InteriorPointSolver::solve_qp(const QpProblem& problem) const {
  return detail::solve_interior_point(detail::canonicalize(problem), options_);
}

SolveResult DenseSimplexSolver::solve_lp(const LpProblem& problem) const {
  return detail::solve_dense_simplex(detail::canonicalize(problem), max_iterations_);
}

SolveResult AutoLpSolver::solve_lp(const LpProblem& problem) const {
  const detail::Canonical c = detail::canonicalize(problem);
  const long long n = c.n(), mi = c.mi(), me = c.me();
  // The simplex works on whichever standard form has fewer rows.
  const long long entries = (mi + me > n) ? n * (mi + 2 * me + n) : (mi + me) * (2 * n + 2 * mi + me);
  if (entries <= dense_entry_limit_) {
    SolveResult r = detail::solve_dense_simplex(c, 50000);
    if (r.status != SolveStatus::kNumericalFailure) return r;
    return detail::solve_interior_point(c, interior_point_.options());
  }
  SolveResult r = detail::solve_interior_point(c, interior_point_.options());
  if (r.status == SolveStatus::kNumericalFailure && entries <= fallback_entry_limit_) {
    SolveResult s = detail::solve_dense_simplex(c, 200000);
    if (s.status != SolveStatus::kNumericalFailure) return s;
  }
  return r;
}

const LpSolver& default_lp_solver() {
  static const AutoLpSolver solver;
  return solver;
}

const QpSolver& default_qp_solver() {
  static const InteriorPointSolver solver;
  return solver;
}

SolveResult solve_lp(const LpProblem& problem) { return default_lp_solver().solve_lp(problem); }
SolveResult solve_qp(const QpProblem& problem) { return default_qp_solver().solve_qp(problem); }

}  // namespace tubempc::solver
