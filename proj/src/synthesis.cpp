#include "tubempc/synthesis.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>

#include "tubempc/error.hpp"
#include "tubempc/log.hpp"

namespace tubempc::synthesis {

using Eigen::MatrixXd;

namespace {

void require_finite(const MatrixXd& M, const char* what) {
  if (!M.allFinite()) throw Error(ErrorKind::kValidation, std::string(what) + " has non-finite entries");
}

void require_square(const MatrixXd& M, int n, const char* what) {
  if (M.rows() != n || M.cols() != n) {
    throw Error(ErrorKind::kDimension, std::string(what) + " must be " + std::to_string(n) + "×" + std::to_string(n));
  }
}

int numeric_rank(const MatrixXd& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  return static_cast<int>((s.array() > 1e-8 * s[0]).count());
}

bool pbh_full_rank(const MatrixXd& A, const MatrixXd& C, double rel_tol) {
  const int n = static_cast<int>(A.rows());
  Eigen::EigenSolver<MatrixXd> es(A, false);
  const double scale = std::max({1.0, A.norm(), C.norm()});
  for (int k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()[k];
    Eigen::MatrixXcd M(n + C.rows(), n);
    M.topRows(n) = -A.cast<std::complex<double>>();
    M.topRows(n).diagonal().array() += lambda;
    M.bottomRows(C.rows()) = C.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    if (svd.singularValues()[n - 1] <= rel_tol * scale) return false;
  }
  return true;
}

// Column-major vec(AᵀZA) = (Aᵀ ⊗ Aᵀ) vec(Z).
MatrixXd kronecker(const MatrixXd& X, const MatrixXd& Y) {
  MatrixXd K(X.rows() * Y.rows(), X.cols() * Y.cols());
  for (int i = 0; i < X.rows(); ++i)
    for (int j = 0; j < X.cols(); ++j) K.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
  return K;
}

MatrixXd sym(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

MatrixXd riccati_step(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R, const MatrixXd& P) {
  const MatrixXd BtP = B.transpose() * P;
  const MatrixXd S = R + BtP * B;
  return sym(A.transpose() * P * A - (BtP * A).transpose() * S.ldlt().solve(BtP * A) + Q);
}

}  // namespace

LtiSystem::LtiSystem(MatrixXd a, MatrixXd b, MatrixXd c, MatrixXd h)
    : A(std::move(a)), B(std::move(b)), C(std::move(c)), H(std::move(h)) {
  const int nx = n();
  if (nx == 0) throw Error(ErrorKind::kDimension, "system has no states");
  require_square(A, nx, "A");
  if (B.rows() != nx) throw Error(ErrorKind::kDimension, "B must have n rows");
  if (C.cols() != nx) throw Error(ErrorKind::kDimension, "C must have n columns");
  if (H.cols() != nx) throw Error(ErrorKind::kDimension, "H must have n columns");
  require_finite(A, "A");
  require_finite(B, "B");
  require_finite(C, "C");
  require_finite(H, "H");
}

GainSet::GainSet(const LtiSystem& sys, MatrixXd k, MatrixXd l, MatrixXd kf, MatrixXd p)
    : K(std::move(k)), L(std::move(l)), Kf(std::move(kf)), P(std::move(p)) {
  const int n = sys.n(), m = sys.m(), ny = sys.p();
  if (K.rows() != m || K.cols() != n) throw Error(ErrorKind::kDimension, "K must be m×n");
  if (Kf.rows() != m || Kf.cols() != n) throw Error(ErrorKind::kDimension, "K_f must be m×n");
  if (L.rows() != n || L.cols() != ny) throw Error(ErrorKind::kDimension, "L must be n×p");
  require_square(P, n, "P");
  require_finite(K, "K");
  require_finite(L, "L");
  require_finite(Kf, "K_f");
  require_finite(P, "P");
  const double rk = spectral_radius(sys.A + sys.B * K);
  if (rk >= 1.0) throw Error(ErrorKind::kStability, "A+BK is not Schur stable (ρ=" + std::to_string(rk) + ")");
  const double rl = spectral_radius(sys.A - L * sys.C);
  if (rl >= 1.0) throw Error(ErrorKind::kStability, "A-LC is not Schur stable (ρ=" + std::to_string(rl) + ")");
  const double rf = spectral_radius(sys.A + sys.B * Kf);
  if (rf >= 1.0) throw Error(ErrorKind::kStability, "A+BK_f is not Schur stable (ρ=" + std::to_string(rf) + ")");
  if (!is_symmetric_positive_definite(P, 1e-8)) {
    throw Error(ErrorKind::kValidation, "terminal cost P is not symmetric positive definite");
  }
}

double dare_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R, const MatrixXd& P) {
  return (riccati_step(A, B, Q, R, P) - P).lpNorm<Eigen::Infinity>();
}

MatrixXd solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R,
                    const DareOptions& options) {
  const int n = static_cast<int>(A.rows());
  require_square(A, n, "A");
  if (B.rows() != n) throw Error(ErrorKind::kDimension, "B must have n rows");
  require_square(Q, n, "Q");
  require_square(R, static_cast<int>(B.cols()), "R");
  require_finite(A, "A");
  require_finite(B, "B");
  require_finite(Q, "Q");
  require_finite(R, "R");
  if (!is_symmetric_positive_definite(Q, -1e-10 * std::max(1.0, Q.lpNorm<Eigen::Infinity>()))) {
    throw Error(ErrorKind::kValidation, "Q must be symmetric positive (semi)definite");
  }
  if (!is_symmetric_positive_definite(R, 0.0)) throw Error(ErrorKind::kValidation, "R must be symmetric positive definite");

  const MatrixXd I = MatrixXd::Identity(n, n);
  const double tol = options.residual_tolerance;
  // Evaluating the residual loses about eps·‖P‖ digits, so the bound is
  // relative once P is large.
  auto scaled_tol = [&](const MatrixXd& P) { return tol * std::max(1.0, P.lpNorm<Eigen::Infinity>()); };
  auto polish = [&](MatrixXd P) {
    // Newton corrections: X - AcᵀXAc = F(P) - P with Ac the current closed loop.
    double res = dare_residual(A, B, Q, R, P);
    for (int i = 0; i < 20 && res > 1e-3 * scaled_tol(P); ++i) {
      const MatrixXd BtP = B.transpose() * P;
      const MatrixXd Ac = A - B * (R + BtP * B).ldlt().solve(BtP * A);
      const MatrixXd F = riccati_step(A, B, Q, R, P) - P;
      const MatrixXd kron = MatrixXd::Identity(n * n, n * n) - kronecker(Ac.transpose(), Ac.transpose());
      const Eigen::VectorXd x = kron.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(F.data(), n * n));
      MatrixXd next = sym(P + Eigen::Map<const MatrixXd>(x.data(), n, n));
      const double r2 = dare_residual(A, B, Q, R, next);
      if (!(r2 < res)) break;
      P = std::move(next);
      res = r2;
    }
    return P;
  };
  auto acceptable = [&](const MatrixXd& P) {
    return P.allFinite() && dare_residual(A, B, Q, R, P) <= scaled_tol(P) && is_symmetric_positive_definite(P, 0.0) &&
           spectral_radius(A + B * (-(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A))) < 1.0;
  };

  // Structured doubling.
  MatrixXd Ak = A;
  MatrixXd Gk = sym(B * R.ldlt().solve(B.transpose()));
  MatrixXd Hk = sym(Q);
  for (int step = 0; step < options.max_doubling_steps; ++step) {
    const Eigen::PartialPivLU<MatrixXd> W(I + Gk * Hk);
    const MatrixXd WA = W.solve(Ak);
    const MatrixXd WG = W.solve(Gk);
    const MatrixXd Hn = sym(Hk + Ak.transpose() * Hk * WA);
    const MatrixXd Gn = sym(Gk + Ak * WG * Ak.transpose());
    Ak = Ak * WA;
    const double change = (Hn - Hk).lpNorm<Eigen::Infinity>();
    Hk = Hn;
    Gk = Gn;
    if (!Hk.allFinite()) break;
    if (change <= 1e-14 * std::max(1.0, Hk.lpNorm<Eigen::Infinity>())) break;
  }
  if (Hk.allFinite()) {
    MatrixXd P = polish(Hk);
    if (acceptable(P)) return P;
  }

  log::info("DARE: doubling did not converge, falling back to fixed-point iteration");
  MatrixXd P = Q;
  for (int i = 0; i < options.max_fixed_point_iterations; ++i) {
    P = riccati_step(A, B, Q, R, P);
    if (!P.allFinite()) break;
    if (dare_residual(A, B, Q, R, P) <= scaled_tol(P)) break;
  }
  if (acceptable(P)) return P;
  throw Error(ErrorKind::kNonConvergence, "DARE did not reach residual " + std::to_string(tol));
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R) {
  const MatrixXd P = solve_dare(A, B, Q, R);
  return -(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
}

MatrixXd observer_gain(const MatrixXd& A, const MatrixXd& C, const MatrixXd& Qo, const MatrixXd& Ro) {
  return -lqr_gain(A.transpose(), C.transpose(), Qo, Ro).transpose();
}

double spectral_radius(const MatrixXd& M) {
  if (M.rows() != M.cols()) throw Error(ErrorKind::kDimension, "spectral_radius needs a square matrix");
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

int controllability_rank(const MatrixXd& A, const MatrixXd& B) {
  const int n = static_cast<int>(A.rows());
  MatrixXd K(n, n * B.cols());
  MatrixXd block = B;
  for (int i = 0; i < n; ++i) {
    K.middleCols(i * B.cols(), B.cols()) = block;
    block = A * block;
  }
  return numeric_rank(K);
}

int observability_rank(const MatrixXd& A, const MatrixXd& C) {
  return controllability_rank(A.transpose(), C.transpose());
}

bool pbh_observable(const MatrixXd& A, const MatrixXd& C, double rel_tol) { return pbh_full_rank(A, C, rel_tol); }

bool pbh_controllable(const MatrixXd& A, const MatrixXd& B, double rel_tol) {
  return pbh_full_rank(A.transpose(), B.transpose(), rel_tol);
}

MatrixXd state_cost_from_output(const MatrixXd& H, const MatrixXd& Qz, double gamma) {
  if (Qz.rows() != H.rows() || Qz.cols() != H.rows()) throw Error(ErrorKind::kDimension, "Q_z must be o×o");
  if (!(gamma > 0.0)) throw Error(ErrorKind::kValidation, "γ must be positive");
  return sym(H.transpose() * Qz * H) + gamma * MatrixXd::Identity(H.cols(), H.cols());
}

bool is_symmetric_positive_definite(const MatrixXd& M, double tol) {
  if (M.rows() != M.cols() || M.size() == 0) return false;
  if ((M - M.transpose()).lpNorm<Eigen::Infinity>() > 1e-9 * std::max(1.0, M.lpNorm<Eigen::Infinity>())) return false;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > tol;
}

}  // namespace tubempc::synthesis
