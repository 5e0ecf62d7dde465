#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "canonical.hpp"

namespace tubempc::solver::detail {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Largest α with v + α dv ≥ 0 (infinity when dv ≥ 0).
double max_step(const VectorXd& v, const VectorXd& dv) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

/// Regularized reduced KKT system
///   [P + GᵀWG + ρI   Aᵀ ] [dx]   [rx]
///   [A              -ρI ] [dy] = [ry]
/// with iterative refinement against the unregularized matrix.
class KktSystem {
 public:
  KktSystem(const Canonical& p, const InteriorPointOptions& o)
      : p_(p), opt_(o), n_(p.n()), me_(p.me()), dense_(p.n() + p.me() <= o.dense_threshold) {
    Gt_ = p_.G.transpose();
    if (dense_) {
      Pd_ = MatrixXd(p_.P);
      Gd_ = MatrixXd(p_.G);
      Ad_ = MatrixXd(p_.A);
    }
  }

  /// Retries with a larger regularization when a pivot breaks down; the
  /// refinement in solve() works against the unregularized matrix.
  bool factor(const VectorXd& w) {
    for (double rho = opt_.regularization; rho <= 1e-4; rho *= 100.0) {
      if (factor_with(w, rho)) return true;
    }
    return false;
  }

  bool factor_with(const VectorXd& w, double rho) {
    w_ = w;
    if (dense_) {
      MatrixXd K = MatrixXd::Zero(n_ + me_, n_ + me_);
      K.topLeftCorner(n_, n_) = Pd_;
      if (w.size() > 0) K.topLeftCorner(n_, n_).noalias() += Gd_.transpose() * w.asDiagonal() * Gd_;
      K.bottomLeftCorner(me_, n_) = Ad_;
      K.topRightCorner(n_, me_) = Ad_.transpose();
      compute_scaling(K.diagonal().head(n_));
      K = scale_.asDiagonal() * K * scale_.asDiagonal();
      K.topLeftCorner(n_, n_).diagonal().array() += rho;
      K.bottomRightCorner(me_, me_).diagonal().array() -= rho;
      dense_ldlt_.compute(K);
      return dense_ldlt_.info() == Eigen::Success && dense_ldlt_.vectorD().allFinite();
    }
    SparseMatrix H = p_.P;
    if (w.size() > 0) {
      const SparseMatrix GtW = Gt_ * w.asDiagonal();
      H += SparseMatrix(GtW * p_.G);
    }
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(H.nonZeros() + 2 * p_.A.nonZeros() + n_ + me_);
    for (int k = 0; k < H.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(H, k); it; ++it) {
        if (it.row() >= it.col()) t.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < p_.A.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p_.A, k); it; ++it) t.emplace_back(n_ + it.row(), it.col(), it.value());
    }
    for (int i = 0; i < n_ + me_; ++i) t.emplace_back(i, i, 0.0);
    SparseMatrix K(n_ + me_, n_ + me_);
    K.setFromTriplets(t.begin(), t.end());
    compute_scaling(K.diagonal().head(n_));
    K = scale_.asDiagonal() * K * scale_.asDiagonal();
    for (int i = 0; i < n_ + me_; ++i) K.coeffRef(i, i) += i < n_ ? rho : -rho;
    if (!analyzed_) {
      sparse_ldlt_.analyzePattern(K);
      analyzed_ = true;
      pattern_nnz_ = K.nonZeros();
    } else if (K.nonZeros() != pattern_nnz_) {
      sparse_ldlt_.analyzePattern(K);
      pattern_nnz_ = K.nonZeros();
    }
    sparse_ldlt_.factorize(K);
    return sparse_ldlt_.info() == Eigen::Success && sparse_ldlt_.vectorD().allFinite();
  }

  void solve(const VectorXd& rx, const VectorXd& ry, VectorXd& dx, VectorXd& dy) const {
    VectorXd rhs(n_ + me_);
    rhs << rx, ry;
    VectorXd d = raw_solve(rhs);
    for (int step = 0; step < opt_.refinement_steps; ++step) {
      const VectorXd residual = rhs - apply(d);
      if (inf_norm(residual) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      d += raw_solve(residual);
    }
    dx = d.head(n_);
    dy = d.tail(me_);
  }

 private:
  // Symmetric diagonal scaling that brings the primal block to a unit
  // diagonal, so the regularization is relative to each pivot.
  void compute_scaling(const VectorXd& diag) {
    scale_ = VectorXd::Ones(n_ + me_);
    for (int i = 0; i < n_; ++i) scale_[i] = 1.0 / std::sqrt(std::max(std::abs(diag[i]), 1e-30));
  }

  VectorXd raw_solve(const VectorXd& rhs) const {
    const VectorXd scaled = scale_.cwiseProduct(rhs);
    if (dense_) return scale_.cwiseProduct(dense_ldlt_.solve(scaled));
    return scale_.cwiseProduct(sparse_ldlt_.solve(scaled));
  }

  // Unregularized KKT product.
  VectorXd apply(const VectorXd& d) const {
    const VectorXd dx = d.head(n_);
    const VectorXd dy = d.tail(me_);
    VectorXd out(n_ + me_);
    VectorXd top = p_.P * dx + Gt_ * (w_.cwiseProduct(p_.G * dx));
    if (me_ > 0) top += p_.A.transpose() * dy;
    out.head(n_) = top;
    if (me_ > 0) out.tail(me_) = p_.A * dx;
    return out;
  }

  const Canonical& p_;
  const InteriorPointOptions& opt_;
  int n_;
  int me_;
  bool dense_;
  SparseMatrix Gt_;
  MatrixXd Pd_, Gd_, Ad_;
  VectorXd w_;
  VectorXd scale_;
  Eigen::LDLT<MatrixXd> dense_ldlt_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> sparse_ldlt_;
  bool analyzed_ = false;
  long pattern_nnz_ = 0;
};

enum class Outcome { kConverged, kReducedAccuracy, kDiverged, kStalled, kFactorizationFailed };

struct CoreResult {
  Outcome outcome = Outcome::kStalled;
  VectorXd x, y, z, s;
  int iterations = 0;
};

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

Residuals residuals(const Canonical& p, const VectorXd& x, const VectorXd& y, const VectorXd& z, const VectorXd& s,
                    VectorXd* rd, VectorXd* re, VectorXd* ri) {
  *rd = p.P * x + p.q;
  if (p.mi() > 0) *rd += p.G.transpose() * z;
  if (p.me() > 0) *rd += p.A.transpose() * y;
  *re = p.me() > 0 ? VectorXd(p.A * x - p.b) : VectorXd(0);
  *ri = p.mi() > 0 ? VectorXd(p.G * x + s - p.h) : VectorXd(0);
  Residuals r;
  r.primal = std::max(inf_norm(*re) / (1.0 + inf_norm(p.b)), inf_norm(*ri) / (1.0 + inf_norm(p.h)));
  r.dual = inf_norm(*rd) / (1.0 + inf_norm(p.q));
  const double pobj = 0.5 * x.dot(p.P * x) + p.q.dot(x);
  r.gap = p.mi() > 0 ? s.dot(z) / std::max(1.0, std::abs(pobj)) : 0.0;
  return r;
}

// Problems without inequality rows reduce to a single KKT solve.
CoreResult solve_equality_only(const Canonical& p, const InteriorPointOptions& opt) {
  CoreResult out;
  KktSystem kkt(p, opt);
  if (!kkt.factor(VectorXd(0))) {
    out.outcome = Outcome::kFactorizationFailed;
    return out;
  }
  kkt.solve(-p.q, p.b, out.x, out.y);
  out.z = VectorXd(0);
  out.s = VectorXd(0);
  out.iterations = 1;
  VectorXd rd, re, ri;
  const Residuals r = residuals(p, out.x, out.y, out.z, out.s, &rd, &re, &ri);
  if (r.primal <= opt.tolerance && r.dual <= opt.tolerance) {
    out.outcome = Outcome::kConverged;
  } else if (r.primal <= opt.relaxed_tolerance && r.dual <= opt.relaxed_tolerance) {
    out.outcome = Outcome::kReducedAccuracy;
  } else {
    out.outcome = Outcome::kStalled;
  }
  return out;
}

CoreResult run_core(const Canonical& p, const InteriorPointOptions& opt) {
  if (p.mi() == 0) return solve_equality_only(p, opt);

  const int mi = p.mi();
  CoreResult out;
  KktSystem kkt(p, opt);

  // Starting point. QPs take x from the KKT system with unit scaling and set
  // z = -s; LPs use the least-norm s with Gx + s = h and, separately, the
  // least-norm z with Gᵀz + Aᵀy = -q. Both are then shifted into the
  // positive orthant.
  const bool linear = !p.has_quadratic();
  VectorXd x, y, z, s;
  if (!kkt.factor(VectorXd::Ones(mi))) {
    out.outcome = Outcome::kFactorizationFailed;
    return out;
  }
  if (linear) {
    kkt.solve(p.G.transpose() * p.h, p.b, x, y);
    s = p.h - p.G * x;
    VectorXd xd, yd;
    kkt.solve(-p.q, VectorXd::Zero(p.me()), xd, yd);
    z = p.G * xd;
  } else {
    kkt.solve(-p.q + p.G.transpose() * p.h, p.b, x, y);
    s = p.h - p.G * x;
    z = -s;
  }
  const double alpha_p = -s.minCoeff();
  if (alpha_p >= 0.0) s.array() += 1.0 + alpha_p;
  const double alpha_d = -z.minCoeff();
  if (alpha_d >= 0.0) z.array() += 1.0 + alpha_d;

  const double scale = 1.0 + inf_norm(p.h) + inf_norm(p.b) + inf_norm(p.q);
  const double divergence = 1e10 * scale;
  int stalls = 0;

  // Near the solution the scaled Newton systems lose accuracy and the dual
  // residual can drift back up, so the best iterate seen is what is returned.
  double best_merit = std::numeric_limits<double>::infinity();
  int since_best = 0;
  VectorXd bx, by, bz, bs;

  VectorXd rd, re, ri, dx, dy;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    out.iterations = iter;
    const Residuals r = residuals(p, x, y, z, s, &rd, &re, &ri);
    if (r.primal <= opt.tolerance && r.dual <= opt.tolerance && r.gap <= opt.tolerance) {
      out.outcome = Outcome::kConverged;
      out.x = x; out.y = y; out.z = z; out.s = s;
      return out;
    }
    const double merit = std::max({r.primal, r.dual, r.gap});
    if (merit < best_merit) {
      best_merit = merit;
      since_best = 0;
      bx = x; by = y; bz = z; bs = s;
    } else if (++since_best >= 10 && best_merit <= opt.relaxed_tolerance) {
      break;
    }
    if (inf_norm(x) > divergence || inf_norm(z) > divergence) {
      out.outcome = Outcome::kDiverged;
      out.x = x; out.y = y; out.z = z; out.s = s;
      return out;
    }

    const VectorXd w = z.cwiseQuotient(s);
    if (!kkt.factor(w)) {
      out.outcome = Outcome::kFactorizationFailed;
      break;
    }
    const double mu = s.dot(z) / mi;

    auto direction = [&](const VectorXd& rc, VectorXd& ddx, VectorXd& ddy, VectorXd& ddz, VectorXd& dds) {
      const VectorXd t = (-rc + z.cwiseProduct(ri)).cwiseQuotient(s);
      kkt.solve(-rd - p.G.transpose() * t, -re, ddx, ddy);
      const VectorXd gdx = p.G * ddx;
      ddz = t + w.cwiseProduct(gdx);
      dds = -ri - gdx;
    };

    VectorXd dz_aff, ds_aff;
    direction(s.cwiseProduct(z), dx, dy, dz_aff, ds_aff);
    const double a_aff = std::min({1.0, max_step(s, ds_aff), max_step(z, dz_aff)});
    const double mu_aff = (s + a_aff * ds_aff).dot(z + a_aff * dz_aff) / mi;
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    VectorXd dz, ds;
    const VectorXd rc = s.cwiseProduct(z) + ds_aff.cwiseProduct(dz_aff) - VectorXd::Constant(mi, sigma * mu);
    direction(rc, dx, dy, dz, ds);
    // LPs may take different primal and dual step lengths.
    double alpha_x = std::min(1.0, 0.99 * max_step(s, ds));
    double alpha_z = std::min(1.0, 0.99 * max_step(z, dz));
    if (!linear) alpha_x = alpha_z = std::min(alpha_x, alpha_z);
    const double alpha = std::min(alpha_x, alpha_z);

    x += alpha_x * dx;
    s += alpha_x * ds;
    y += alpha_z * dy;
    z += alpha_z * dz;
    // Keep strictly interior.
    s = s.cwiseMax(1e-300);
    z = z.cwiseMax(1e-300);

    stalls = alpha < 1e-9 ? stalls + 1 : 0;
    if (stalls >= 5) break;
  }

  if (bx.size() > 0) {
    x = bx; y = by; z = bz; s = bs;
  }
  out.x = x; out.y = y; out.z = z; out.s = s;
  const Residuals r = residuals(p, x, y, z, s, &rd, &re, &ri);
  if (r.primal <= opt.relaxed_tolerance && r.dual <= opt.relaxed_tolerance && r.gap <= opt.relaxed_tolerance) {
    out.outcome = Outcome::kReducedAccuracy;
  } else if (out.outcome != Outcome::kFactorizationFailed) {
    out.outcome = Outcome::kStalled;
  }
  return out;
}

SolveResult finish(const Canonical& p, const CoreResult& core, SolveStatus status, std::string detail) {
  SolveResult result;
  result.status = status;
  result.iterations = core.iterations;
  result.detail = std::move(detail);
  if (status == SolveStatus::kOptimal) {
    result.x = core.x;
    const double min_obj = 0.5 * core.x.dot(p.P * core.x) + p.q.dot(core.x);
    result.objective = p.sign * min_obj;
    result.ineq_duals = core.z.head(p.user_ineq_rows);
    result.eq_duals = core.y;
  }
  return result;
}

// min t  s.t.  Gx - t ≤ h,  -t ≤ 0,  Ax = b.
std::optional<double> phase_one(const Canonical& p, const InteriorPointOptions& opt) {
  const int n = p.n();
  Canonical aux;
  aux.P = SparseMatrix(n + 1, n + 1);
  aux.q = VectorXd::Zero(n + 1);
  aux.q[n] = 1.0;
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < p.G.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(p.G, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  }
  for (int i = 0; i < p.mi(); ++i) t.emplace_back(i, n, -1.0);
  t.emplace_back(p.mi(), n, -1.0);
  aux.G.resize(p.mi() + 1, n + 1);
  aux.G.setFromTriplets(t.begin(), t.end());
  aux.h = VectorXd::Zero(p.mi() + 1);
  aux.h.head(p.mi()) = p.h;
  aux.A = SparseMatrix(p.A);
  aux.A.conservativeResize(p.me(), n + 1);
  aux.b = p.b;
  const CoreResult r = run_core(aux, opt);
  if (r.outcome != Outcome::kConverged && r.outcome != Outcome::kReducedAccuracy) return std::nullopt;
  return r.x[n];
}

// min qᵀr  s.t.  Gr ≤ 0,  -1 ≤ r ≤ 1,  Ar = 0,  Pr = 0.
std::optional<double> best_ray(const Canonical& p, const InteriorPointOptions& opt) {
  const int n = p.n();
  Canonical aux;
  aux.P = SparseMatrix(n, n);
  aux.q = p.q;
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < p.G.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(p.G, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  }
  for (int j = 0; j < n; ++j) {
    t.emplace_back(p.mi() + j, j, 1.0);
    t.emplace_back(p.mi() + n + j, j, -1.0);
  }
  aux.G.resize(p.mi() + 2 * n, n);
  aux.G.setFromTriplets(t.begin(), t.end());
  aux.h = VectorXd::Zero(p.mi() + 2 * n);
  aux.h.tail(2 * n).setOnes();
  std::vector<Eigen::Triplet<double>> e;
  for (int k = 0; k < p.A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(p.A, k); it; ++it) e.emplace_back(it.row(), it.col(), it.value());
  }
  int rows = p.me();
  if (p.has_quadratic()) {
    for (int k = 0; k < p.P.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(p.P, k); it; ++it) e.emplace_back(rows + it.row(), it.col(), it.value());
    }
    rows += n;
  }
  aux.A.resize(rows, n);
  aux.A.setFromTriplets(e.begin(), e.end());
  aux.b = VectorXd::Zero(rows);
  const CoreResult r = run_core(aux, opt);
  if (r.outcome != Outcome::kConverged && r.outcome != Outcome::kReducedAccuracy) return std::nullopt;
  return p.q.dot(r.x);
}

}  // namespace

SolveResult solve_interior_point(const Canonical& p, const InteriorPointOptions& opt) {
  const CoreResult core = run_core(p, opt);
  if (core.outcome == Outcome::kConverged) return finish(p, core, SolveStatus::kOptimal, {});
  if (core.outcome == Outcome::kReducedAccuracy) {
    return finish(p, core, SolveStatus::kOptimal, "converged to reduced accuracy");
  }

  const auto t = phase_one(p, opt);
  if (!t) return finish(p, core, SolveStatus::kNumericalFailure, "interior point did not converge; phase-one failed");
  if (*t > 1e-7 * (1.0 + inf_norm(p.h))) {
    return finish(p, core, SolveStatus::kInfeasible, "phase-one minimum " + std::to_string(*t));
  }
  const auto ray = best_ray(p, opt);
  if (!ray) return finish(p, core, SolveStatus::kNumericalFailure, "interior point did not converge; ray search failed");
  if (*ray < -1e-7 * (1.0 + inf_norm(p.q))) {
    return finish(p, core, SolveStatus::kUnbounded, "improving ray with slope " + std::to_string(*ray));
  }
  return finish(p, core, SolveStatus::kNumericalFailure, "interior point did not converge on a feasible, bounded problem");
}

}  // namespace tubempc::solver::detail
