#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "canonical.hpp"

namespace tubempc::solver::detail {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class StdStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

struct StdResult {
  StdStatus status = StdStatus::kIterationLimit;
  VectorXd zeta;    // primal solution of the standard form
  VectorXd lambda;  // row multipliers, reduced costs c - Mᵀλ ≥ 0
  int iterations = 0;
};

/// Two-phase tableau simplex for  min cᵀζ  s.t.  Mζ = r,  ζ ≥ 0.
/// Dantzig pricing with a switch to Bland's rule after a run of degenerate
/// pivots. The final basis is re-solved against the original data.
class StandardSimplex {
 public:
  StandardSimplex(const MatrixXd& M, const VectorXd& r, const VectorXd& c, int max_iterations)
      : M_(M), r_(r), c_(c), m_(static_cast<int>(M.rows())), n_(static_cast<int>(M.cols())),
        max_iterations_(max_iterations) {}

  StdResult run() {
    StdResult result;
    sigma_ = VectorXd::Ones(m_);
    for (int i = 0; i < m_; ++i) {
      if (r_[i] < 0.0) sigma_[i] = -1.0;
    }
    T_ = MatrixXd::Zero(m_, n_ + m_ + 1);
    T_.leftCols(n_) = sigma_.asDiagonal() * M_;
    T_.block(0, n_, m_, m_).setIdentity();
    T_.col(n_ + m_) = sigma_.cwiseProduct(r_);
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;

    // Phase one: minimize the sum of artificials.
    VectorXd cost1 = VectorXd::Zero(n_ + m_);
    cost1.tail(m_).setOnes();
    reset_costs(cost1);
    const StdStatus p1 = iterate(n_ + m_, result.iterations);
    if (p1 == StdStatus::kIterationLimit) return result;
    const double infeasibility = current_objective(cost1);
    if (infeasibility > 1e-9 * (1.0 + r_.lpNorm<Eigen::Infinity>())) {
      result.status = StdStatus::kInfeasible;
      return result;
    }
    drive_out_artificials();

    // Phase two on the structural columns only.
    VectorXd cost2 = VectorXd::Zero(n_ + m_);
    cost2.head(n_) = c_;
    reset_costs(cost2);
    const StdStatus p2 = iterate(n_, result.iterations);
    if (p2 != StdStatus::kOptimal) {
      result.status = p2;
      return result;
    }
    extract(cost2, result);
    result.status = StdStatus::kOptimal;
    return result;
  }

 private:
  void reset_costs(const VectorXd& cost) {
    rc_ = cost;
    for (int i = 0; i < m_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb != 0.0) rc_ -= cb * T_.row(i).head(n_ + m_).transpose();
    }
    rc_tol_ = 1e-9 * std::max(1.0, cost.lpNorm<Eigen::Infinity>());
  }

  double current_objective(const VectorXd& cost) const {
    double v = 0.0;
    for (int i = 0; i < m_; ++i) v += cost[basis_[i]] * T_(i, n_ + m_);
    return v;
  }

  void pivot(int row, int col) {
    T_.row(row) /= T_(row, col);
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = T_(i, col);
      if (f != 0.0) T_.row(i) -= f * T_.row(row);
    }
    const double f = rc_[col];
    if (f != 0.0) rc_ -= f * T_.row(row).head(n_ + m_).transpose();
    basis_[row] = col;
  }

  StdStatus iterate(int allowed_columns, int& iterations) {
    int degenerate_run = 0;
    std::vector<char> in_basis(n_ + m_, 0);
    for (int b : basis_) in_basis[b] = 1;
    while (iterations < max_iterations_) {
      const bool bland = degenerate_run > 50;
      int enter = -1;
      double best = -rc_tol_;
      for (int j = 0; j < allowed_columns; ++j) {
        if (in_basis[j]) continue;
        if (rc_[j] < best) {
          enter = j;
          best = rc_[j];
          if (bland) break;
        }
      }
      if (enter < 0) return StdStatus::kOptimal;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      const double col_scale = std::max(1.0, T_.col(enter).lpNorm<Eigen::Infinity>());
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, enter);
        if (a <= 1e-11 * col_scale) continue;
        const double ratio = std::max(T_(i, n_ + m_), 0.0) / a;
        if (leave < 0 || ratio < best_ratio - 1e-12) {
          leave = i;
          best_ratio = ratio;
        } else if (ratio <= best_ratio + 1e-12) {
          const bool better = bland ? basis_[i] < basis_[leave] : a > T_(leave, enter);
          if (better) leave = i;
        }
      }
      if (leave < 0) return StdStatus::kUnbounded;

      degenerate_run = best_ratio <= 1e-12 ? degenerate_run + 1 : 0;
      in_basis[basis_[leave]] = 0;
      in_basis[enter] = 1;
      pivot(leave, enter);
      ++iterations;
    }
    return StdStatus::kIterationLimit;
  }

  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_) continue;
      int best = -1;
      double best_abs = 1e-7;
      for (int j = 0; j < n_; ++j) {
        if (std::abs(T_(i, j)) > best_abs &&
            std::find(basis_.begin(), basis_.end(), j) == basis_.end()) {
          best = j;
          best_abs = std::abs(T_(i, j));
        }
      }
      // A row with no structural entry is redundant; its artificial stays
      // basic at level zero.
      if (best >= 0) pivot(i, best);
    }
  }

  void extract(const VectorXd& cost, StdResult& result) const {
    MatrixXd B(m_, m_);
    VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) {
      const int j = basis_[i];
      if (j < n_) {
        B.col(i) = sigma_.cwiseProduct(M_.col(j));
      } else {
        B.col(i) = VectorXd::Unit(m_, j - n_);
      }
      cb[i] = cost[j];
    }
    Eigen::FullPivLU<MatrixXd> lu(B);
    VectorXd xb;
    VectorXd lam;
    if (lu.isInvertible()) {
      xb = lu.solve(sigma_.cwiseProduct(r_));
      lam = lu.transpose().solve(cb);
    } else {
      xb = T_.col(n_ + m_);
      lam = VectorXd::Zero(m_);
    }
    result.zeta = VectorXd::Zero(n_);
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_) result.zeta[basis_[i]] = std::max(0.0, xb[i]);
    }
    result.lambda = sigma_.cwiseProduct(lam);
  }

  const MatrixXd& M_;
  const VectorXd& r_;
  const VectorXd& c_;
  int m_;
  int n_;
  int max_iterations_;
  VectorXd sigma_;
  MatrixXd T_;
  VectorXd rc_;
  double rc_tol_ = 1e-9;
  std::vector<int> basis_;
};

StdResult standard_simplex(const MatrixXd& M, const VectorXd& r, const VectorXd& c, int max_iterations) {
  return StandardSimplex(M, r, c, max_iterations).run();
}

SolveResult make_result(const Canonical& p, SolveStatus status, int iterations, std::string detail = {}) {
  SolveResult out;
  out.status = status;
  out.iterations = iterations;
  out.detail = std::move(detail);
  (void)p;
  return out;
}

void fill_optimal(const Canonical& p, const VectorXd& x, const VectorXd& z, const VectorXd& y, SolveResult& out) {
  out.status = SolveStatus::kOptimal;
  out.x = x;
  out.objective = p.sign * p.q.dot(x);
  out.ineq_duals = z.head(p.user_ineq_rows);
  out.eq_duals = y;
}

// Variables [x⁺, x⁻, s]; rows [G -G I; A -A 0] = [h; b].
SolveResult solve_primal_form(const Canonical& p, const MatrixXd& G, const MatrixXd& A, int max_iterations) {
  const int n = p.n(), mi = p.mi(), me = p.me();
  MatrixXd M = MatrixXd::Zero(mi + me, 2 * n + mi);
  M.block(0, 0, mi, n) = G;
  M.block(0, n, mi, n) = -G;
  M.block(0, 2 * n, mi, mi).setIdentity();
  M.block(mi, 0, me, n) = A;
  M.block(mi, n, me, n) = -A;
  VectorXd r(mi + me);
  r << p.h, p.b;
  VectorXd c = VectorXd::Zero(2 * n + mi);
  c.head(n) = p.q;
  c.segment(n, n) = -p.q;

  const StdResult res = standard_simplex(M, r, c, max_iterations);
  switch (res.status) {
    case StdStatus::kInfeasible: return make_result(p, SolveStatus::kInfeasible, res.iterations);
    case StdStatus::kUnbounded: return make_result(p, SolveStatus::kUnbounded, res.iterations);
    case StdStatus::kIterationLimit:
      return make_result(p, SolveStatus::kNumericalFailure, res.iterations, "simplex iteration limit");
    case StdStatus::kOptimal: break;
  }
  SolveResult out = make_result(p, SolveStatus::kOptimal, res.iterations);
  const VectorXd x = res.zeta.head(n) - res.zeta.segment(n, n);
  fill_optimal(p, x, -res.lambda.head(mi), -res.lambda.tail(me), out);
  return out;
}

// Lagrange dual  min hᵀz + bᵀy  s.t.  Gᵀz + Aᵀy = -q,  z ≥ 0, with y split.
// The primal solution is the multiplier vector of the dual's equality rows.
SolveResult solve_dual_form(const Canonical& p, const MatrixXd& G, const MatrixXd& A, int max_iterations) {
  const int n = p.n(), mi = p.mi(), me = p.me();
  MatrixXd M(n, mi + 2 * me);
  M.leftCols(mi) = G.transpose();
  M.middleCols(mi, me) = A.transpose();
  M.rightCols(me) = -A.transpose();
  VectorXd c(mi + 2 * me);
  c << p.h, p.b, -p.b;

  const StdResult res = standard_simplex(M, -p.q, c, max_iterations);
  switch (res.status) {
    case StdStatus::kUnbounded: return make_result(p, SolveStatus::kInfeasible, res.iterations);
    case StdStatus::kIterationLimit:
      return make_result(p, SolveStatus::kNumericalFailure, res.iterations, "simplex iteration limit");
    case StdStatus::kInfeasible: {
      // Primal is infeasible or unbounded; a Farkas certificate decides.
      const StdResult farkas = standard_simplex(M, VectorXd::Zero(n), c, max_iterations);
      if (farkas.status == StdStatus::kUnbounded) return make_result(p, SolveStatus::kInfeasible, res.iterations);
      if (farkas.status == StdStatus::kOptimal) return make_result(p, SolveStatus::kUnbounded, res.iterations);
      return make_result(p, SolveStatus::kNumericalFailure, res.iterations, "Farkas check failed");
    }
    case StdStatus::kOptimal: break;
  }
  SolveResult out = make_result(p, SolveStatus::kOptimal, res.iterations);
  const VectorXd z = res.zeta.head(mi);
  const VectorXd y = res.zeta.segment(mi, me) - res.zeta.tail(me);
  fill_optimal(p, res.lambda, z, y, out);
  return out;
}

}  // namespace

SolveResult solve_dense_simplex(const Canonical& p, int max_iterations) {
  const MatrixXd G(p.G);
  const MatrixXd A(p.A);
  if (p.mi() + p.me() > p.n()) return solve_dual_form(p, G, A, max_iterations);
  return solve_primal_form(p, G, A, max_iterations);
}

}  // namespace tubempc::solver::detail
