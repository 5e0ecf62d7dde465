#pragma once

#include <Eigen/Core>

namespace tubempc::synthesis {

/// x⁺ = Ax + Bu + w,  y = Cx + v,  z = Hx.
struct LtiSystem {
  Eigen::MatrixXd A, B, C, H;

  LtiSystem() = default;
  /// Throws Error(kDimension) or Error(kValidation) on inconsistent data.
  LtiSystem(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C, Eigen::MatrixXd H);

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }
  int o() const { return static_cast<int>(H.rows()); }
};

/// Gains used by the controller. Construction checks that every closed loop
/// is Schur stable and that P is symmetric positive definite.
struct GainSet {
  Eigen::MatrixXd K;   // tube feedback, u = ū + K(x̂ - x̄)
  Eigen::MatrixXd L;   // observer gain
  Eigen::MatrixXd Kf;  // terminal LQR gain
  Eigen::MatrixXd P;   // terminal cost

  GainSet() = default;
  GainSet(const LtiSystem& sys, Eigen::MatrixXd K, Eigen::MatrixXd L, Eigen::MatrixXd Kf, Eigen::MatrixXd P);
};

struct DareOptions {
  double residual_tolerance = 1e-9;
  int max_fixed_point_iterations = 10000;
  int max_doubling_steps = 100;
};

/// Stabilizing solution of P = AᵀPA - AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q. Structured
/// doubling first, plain fixed-point iteration as a fallback. Throws
/// Error(kNonConvergence) when the residual bound is not met.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                           const Eigen::MatrixXd& R, const DareOptions& options = {});

double dare_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

/// K = -(R+BᵀPB)⁻¹BᵀPA, so the closed loop is A+BK.
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                         const Eigen::MatrixXd& R);

/// L from the dual regulator on (Aᵀ, Cᵀ); A-LC is the estimator error map.
Eigen::MatrixXd observer_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, const Eigen::MatrixXd& Qo,
                              const Eigen::MatrixXd& Ro);

double spectral_radius(const Eigen::MatrixXd& M);
int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
int observability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);

/// Hautus test: rank [λI - A; C] = n at every eigenvalue λ of A. Unlike the
/// Kalman matrix this stays well conditioned when A has eigenvalues far
/// from the unit circle.
bool pbh_observable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, double rel_tol = 1e-8);
bool pbh_controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double rel_tol = 1e-8);

/// Q = HᵀQ_zH + γI.
Eigen::MatrixXd state_cost_from_output(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Qz, double gamma = 1e-6);

bool is_symmetric_positive_definite(const Eigen::MatrixXd& M, double tol = 1e-10);

}  // namespace tubempc::synthesis
