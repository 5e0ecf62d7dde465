#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <string>
#include <string_view>

namespace tubempc::solver {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

enum class Sense { kMaximize, kMinimize };

/// Linear program
///   max/min  cᵀx  s.t.  A_ineq x ≤ b_ineq,  A_eq x = b_eq,  lower ≤ x ≤ upper.
/// Empty `lower`/`upper` mean free variables; individual entries may be ±inf.
struct LpProblem {
  Sense sense = Sense::kMaximize;
  Eigen::VectorXd objective;
  SparseMatrix A_ineq;
  Eigen::VectorXd b_ineq;
  SparseMatrix A_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int num_variables() const { return static_cast<int>(objective.size()); }
  /// Throws Error(kDimension / kValidation) on inconsistent dimensions or
  /// non-finite data.
  void validate() const;
};

/// Convex quadratic program
///   min ½ xᵀPx + qᵀx  s.t.  A_ineq x ≤ b_ineq,  A_eq x = b_eq.
struct QpProblem {
  SparseMatrix P;
  Eigen::VectorXd q;
  SparseMatrix A_ineq;
  Eigen::VectorXd b_ineq;
  SparseMatrix A_eq;
  Eigen::VectorXd b_eq;

  int num_variables() const { return static_cast<int>(q.size()); }
  /// Checks dimensions, finiteness, symmetry of P (1e-10) and PSD-ness
  /// (eigenvalues ≥ -1e-9).
  void validate() const;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };

std::string_view to_string(SolveStatus status);

/// Outcome of a solve. For `kOptimal`, `x` and `objective` hold the
/// minimizer/maximizer and its value in the problem's own sense.
///
/// Multipliers satisfy  ∇f(x) + A_ineqᵀ ineq_duals + A_eqᵀ eq_duals = 0
/// where f is the objective written as a minimization (so f = -cᵀx for a
/// maximization LP) and ineq_duals ≥ 0. Bound multipliers are not reported.
struct SolveResult {
  SolveStatus status = SolveStatus::kNumericalFailure;
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd ineq_duals;
  Eigen::VectorXd eq_duals;
  int iterations = 0;
  std::string detail;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

class LpSolver {
 public:
  virtual ~LpSolver() = default;
  virtual SolveResult solve_lp(const LpProblem& problem) const = 0;
  virtual std::string_view name() const = 0;
};

class QpSolver {
 public:
  virtual ~QpSolver() = default;
  virtual SolveResult solve_qp(const QpProblem& problem) const = 0;
  virtual std::string_view name() const = 0;
};

struct InteriorPointOptions {
  int max_iterations = 120;
  double tolerance = 1e-10;
  /// Accept as optimal on stall when all residuals are below this.
  double relaxed_tolerance = 1e-7;
  double regularization = 1e-11;
  int refinement_steps = 3;
  /// KKT systems up to this size are factored densely.
  int dense_threshold = 160;
};

/// Mehrotra predictor-corrector interior-point method on the inequality form
/// with free variables. Handles LPs and convex QPs; sparse KKT factorization
/// for large problems. Infeasibility and unboundedness are diagnosed with
/// auxiliary bounded LPs when the main iteration does not converge.
class InteriorPointSolver final : public LpSolver, public QpSolver {
 public:
  explicit InteriorPointSolver(InteriorPointOptions options = {}) : options_(options) {}

  SolveResult solve_lp(const LpProblem& problem) const override;
  SolveResult solve_qp(const QpProblem& problem) const override;
  std::string_view name() const override { return "interior-point"; }

  const InteriorPointOptions& options() const { return options_; }

 private:
  InteriorPointOptions options_;
};

/// Two-phase dense tableau simplex. Exact vertex solutions; meant for small
/// problems and as an independent cross-check of the interior-point backend.
class DenseSimplexSolver final : public LpSolver {
 public:
  explicit DenseSimplexSolver(int max_iterations = 50000) : max_iterations_(max_iterations) {}

  SolveResult solve_lp(const LpProblem& problem) const override;
  std::string_view name() const override { return "dense-simplex"; }

 private:
  int max_iterations_;
};

/// Routes small LPs to the simplex and everything else to the interior-point
/// method. Interior-point failures on LPs up to `fallback_entry_limit`
/// tableau entries are retried with the simplex.
class AutoLpSolver final : public LpSolver {
 public:
  explicit AutoLpSolver(long long dense_entry_limit = 400000, long long fallback_entry_limit = 8000000)
      : dense_entry_limit_(dense_entry_limit), fallback_entry_limit_(fallback_entry_limit) {}

  SolveResult solve_lp(const LpProblem& problem) const override;
  std::string_view name() const override { return "auto"; }

 private:
  long long dense_entry_limit_;
  long long fallback_entry_limit_;
  DenseSimplexSolver simplex_;
  InteriorPointSolver interior_point_;
};

const LpSolver& default_lp_solver();
const QpSolver& default_qp_solver();

SolveResult solve_lp(const LpProblem& problem);
SolveResult solve_qp(const QpProblem& problem);

/// Convenience for building inequality blocks from dense data.
SparseMatrix to_sparse(const Eigen::MatrixXd& dense);

}  // namespace tubempc::solver
