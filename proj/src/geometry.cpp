#include "tubempc/geometry.hpp"

#include <Eigen/LU>

#include <cmath>
#include <string>
#include <vector>

namespace tubempc::geometry {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

solver::LpProblem support_lp(const HPolytope& P, const VectorXd& a) {
  solver::LpProblem lp;
  lp.sense = solver::Sense::kMaximize;
  lp.objective = a;
  lp.A_ineq = solver::to_sparse(P.H());
  lp.b_ineq = P.b();
  return lp;
}

}  // namespace

HPolytope::HPolytope(MatrixXd H, VectorXd b) : H_(std::move(H)), b_(std::move(b)) {
  if (H_.rows() != b_.size()) throw Error(ErrorKind::kDimension, "HPolytope: H and b row counts differ");
  if (H_.rows() == 0 || H_.cols() == 0) throw Error(ErrorKind::kValidation, "HPolytope: needs at least one row");
  if (!H_.allFinite() || !b_.allFinite()) throw Error(ErrorKind::kValidation, "HPolytope: non-finite entries");
  for (int i = 0; i < H_.rows(); ++i) {
    const double norm = H_.row(i).norm();
    if (norm == 0.0) throw Error(ErrorKind::kValidation, "HPolytope: row " + std::to_string(i) + " is zero");
    H_.row(i) /= norm;
    b_[i] /= norm;
  }
}

HPolytope HPolytope::box(const VectorXd& lower, const VectorXd& upper) {
  const int n = static_cast<int>(lower.size());
  if (upper.size() != n) throw Error(ErrorKind::kDimension, "box: lower/upper sizes differ");
  MatrixXd H(2 * n, n);
  H << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  VectorXd b(2 * n);
  b << upper, -lower;
  return HPolytope(std::move(H), std::move(b));
}

HPolytope HPolytope::symmetric_box(const VectorXd& half_widths) { return box(-half_widths, half_widths); }

bool HPolytope::contains(const VectorXd& x, double tol) const {
  if (x.size() != dim()) throw Error(ErrorKind::kDimension, "contains: point dimension mismatch");
  return ((H_ * x - b_).array() <= tol).all();
}

bool HPolytope::is_empty(const solver::LpSolver& lp) const {
  const auto r = lp.solve_lp(support_lp(*this, VectorXd::Zero(dim())));
  if (r.status == solver::SolveStatus::kInfeasible) return true;
  if (r.status == solver::SolveStatus::kOptimal || r.status == solver::SolveStatus::kUnbounded) return false;
  throw Error(ErrorKind::kSolverFailure, "emptiness LP failed: " + r.detail);
}

bool HPolytope::is_bounded(const solver::LpSolver& lp) const {
  for (int i = 0; i < dim(); ++i) {
    for (double sign : {1.0, -1.0}) {
      if (!support(*this, sign * VectorXd::Unit(dim(), i), lp).bounded) return false;
    }
  }
  return true;
}

std::optional<std::pair<VectorXd, VectorXd>> HPolytope::as_box(double tol) const {
  const int n = dim();
  VectorXd lower = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  VectorXd upper = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int i = 0; i < rows(); ++i) {
    int axis = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(H_(i, j)) > tol) {
        if (axis >= 0) return std::nullopt;
        axis = j;
      }
    }
    if (H_(i, axis) > 0) {
      upper[axis] = std::min(upper[axis], b_[i] / H_(i, axis));
    } else {
      lower[axis] = std::max(lower[axis], b_[i] / H_(i, axis));
    }
  }
  if (!lower.allFinite() || !upper.allFinite()) return std::nullopt;
  return std::make_pair(lower, upper);
}

MappedSet::MappedSet(MatrixXd map, HPolytope base_set) : M(std::move(map)), base(std::move(base_set)) {
  if (M.cols() != base.dim()) throw Error(ErrorKind::kDimension, "MappedSet: map columns must match base dimension");
  if (!M.allFinite()) throw Error(ErrorKind::kValidation, "MappedSet: non-finite map");
}

MappedSet MappedSet::identity(HPolytope set) {
  const int n = set.dim();
  return MappedSet(MatrixXd::Identity(n, n), std::move(set));
}

std::optional<HPolytope> MappedSet::to_hpolytope() const {
  if (M.rows() != M.cols()) return std::nullopt;
  if (M.isIdentity(0.0)) return base;
  const Eigen::FullPivLU<MatrixXd> lu(M);
  if (!lu.isInvertible()) return std::nullopt;
  return HPolytope(base.H() * lu.inverse(), base.b());
}

SupportResult support(const HPolytope& P, const VectorXd& a, const solver::LpSolver& lp) {
  if (a.size() != P.dim()) throw Error(ErrorKind::kDimension, "support: direction dimension mismatch");
  if (!a.allFinite()) throw Error(ErrorKind::kValidation, "support: non-finite direction");
  const auto r = lp.solve_lp(support_lp(P, a));
  SupportResult out;
  switch (r.status) {
    case solver::SolveStatus::kOptimal:
      out.value = r.objective;
      out.maximizer = r.x;
      return out;
    case solver::SolveStatus::kUnbounded:
      out.bounded = false;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    case solver::SolveStatus::kInfeasible:
      throw Error(ErrorKind::kEmptySet, "support: polytope is empty");
    case solver::SolveStatus::kNumericalFailure:
      break;
  }
  throw Error(ErrorKind::kSolverFailure, "support LP failed: " + r.detail);
}

SupportResult support(const MappedSet& P, const VectorXd& a, const solver::LpSolver& lp) {
  if (a.size() != P.dim()) throw Error(ErrorKind::kDimension, "support: direction dimension mismatch");
  SupportResult r = support(P.base, P.M.transpose() * a, lp);
  if (r.bounded) r.maximizer = P.M * r.maximizer;
  return r;
}

double support_value(const HPolytope& P, const VectorXd& a, const solver::LpSolver& lp) {
  const SupportResult r = support(P, a, lp);
  if (!r.bounded) throw Error(ErrorKind::kSolverFailure, "support is unbounded");
  return r.value;
}

double support_value(const MappedSet& P, const VectorXd& a, const solver::LpSolver& lp) {
  const SupportResult r = support(P, a, lp);
  if (!r.bounded) throw Error(ErrorKind::kSolverFailure, "support is unbounded");
  return r.value;
}

HPolytope pontryagin_diff(const HPolytope& A, const MatrixXd& C, const HPolytope& B, const solver::LpSolver& lp) {
  if (C.rows() != A.dim() || C.cols() != B.dim()) {
    throw Error(ErrorKind::kDimension, "pontryagin_diff: C must map B's space into A's space");
  }
  VectorXd offsets = A.b();
  for (int i = 0; i < A.rows(); ++i) {
    const SupportResult s = support(B, C.transpose() * A.H().row(i).transpose(), lp);
    if (!s.bounded) throw Error(ErrorKind::kSolverFailure, "pontryagin_diff: subtracted set is unbounded");
    offsets[i] -= s.value;
  }
  return HPolytope(A.H(), offsets);
}

namespace {

template <typename Set>
bool subset_impl(const Set& P, const HPolytope& Q, double tol, const solver::LpSolver& lp) {
  if (P.dim() != Q.dim()) throw Error(ErrorKind::kDimension, "is_subset: dimension mismatch");
  for (int i = 0; i < Q.rows(); ++i) {
    const SupportResult s = support(P, Q.H().row(i).transpose(), lp);
    if (!s.bounded || s.value > Q.b()[i] + tol) return false;
  }
  return true;
}

}  // namespace

bool is_subset(const HPolytope& P, const HPolytope& Q, double tol, const solver::LpSolver& lp) {
  return subset_impl(P, Q, tol, lp);
}

bool is_subset(const MappedSet& P, const HPolytope& Q, double tol, const solver::LpSolver& lp) {
  return subset_impl(P, Q, tol, lp);
}

HPolytope intersect(const HPolytope& P, const HPolytope& Q) {
  if (P.dim() != Q.dim()) throw Error(ErrorKind::kDimension, "intersect: dimension mismatch");
  MatrixXd H(P.rows() + Q.rows(), P.dim());
  H << P.H(), Q.H();
  VectorXd b(P.rows() + Q.rows());
  b << P.b(), Q.b();
  return HPolytope(std::move(H), std::move(b));
}

HPolytope remove_redundancy(const HPolytope& P, double tol, const solver::LpSolver& lp) {
  // Identical normalized rows: keep the tightest.
  std::vector<int> kept;
  for (int i = 0; i < P.rows(); ++i) {
    bool duplicate = false;
    for (int& k : kept) {
      if ((P.H().row(i) - P.H().row(k)).lpNorm<Eigen::Infinity>() <= 1e-12) {
        if (P.b()[i] < P.b()[k]) k = i;
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(i);
  }

  std::vector<char> active(kept.size(), 1);
  for (size_t c = 0; c < kept.size(); ++c) {
    const int i = kept[c];
    // Other active rows plus a relaxed copy of row i keep the LP bounded.
    std::vector<int> rows;
    for (size_t d = 0; d < kept.size(); ++d) {
      if (d != c && active[d]) rows.push_back(kept[d]);
    }
    MatrixXd H(rows.size() + 1, P.dim());
    VectorXd b(rows.size() + 1);
    for (size_t r = 0; r < rows.size(); ++r) {
      H.row(r) = P.H().row(rows[r]);
      b[r] = P.b()[rows[r]];
    }
    H.row(rows.size()) = P.H().row(i);
    b[rows.size()] = P.b()[i] + 1.0;
    solver::LpProblem problem;
    problem.objective = P.H().row(i).transpose();
    problem.A_ineq = solver::to_sparse(H);
    problem.b_ineq = b;
    const auto r = lp.solve_lp(problem);
    if (r.status == solver::SolveStatus::kInfeasible) throw Error(ErrorKind::kEmptySet, "remove_redundancy: empty polytope");
    if (r.status != solver::SolveStatus::kOptimal) {
      throw Error(ErrorKind::kSolverFailure, "remove_redundancy LP failed: " + r.detail);
    }
    if (r.objective <= P.b()[i] - tol) active[c] = 0;
  }

  std::vector<int> survivors;
  for (size_t c = 0; c < kept.size(); ++c) {
    if (active[c]) survivors.push_back(kept[c]);
  }
  MatrixXd H(survivors.size(), P.dim());
  VectorXd b(survivors.size());
  for (size_t r = 0; r < survivors.size(); ++r) {
    H.row(r) = P.H().row(survivors[r]);
    b[r] = P.b()[survivors[r]];
  }
  return HPolytope(std::move(H), std::move(b));
}

HPolytope scale(const HPolytope& P, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::kValidation, "scale: factor must be finite and ≥ 0");
  return HPolytope(P.H(), alpha * P.b());
}

HPolytope cross_product(const HPolytope& P, const HPolytope& Q) {
  MatrixXd H = MatrixXd::Zero(P.rows() + Q.rows(), P.dim() + Q.dim());
  H.topLeftCorner(P.rows(), P.dim()) = P.H();
  H.bottomRightCorner(Q.rows(), Q.dim()) = Q.H();
  VectorXd b(P.rows() + Q.rows());
  b << P.b(), Q.b();
  return HPolytope(std::move(H), std::move(b));
}

}  // namespace tubempc::geometry
