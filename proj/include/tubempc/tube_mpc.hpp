#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tubempc/geometry.hpp"
#include "tubempc/rpi.hpp"
#include "tubempc/solver.hpp"
#include "tubempc/synthesis.hpp"

namespace tubempc::mpc {

/// Plant x⁺ = Ax + Bu + w, y = Cx + v, z = Hx with z ∈ Z, u ∈ U, w ∈ W,
/// v ∈ V.
struct PlantModel {
  synthesis::LtiSystem sys;
  geometry::HPolytope Z, U, W, V;

  /// Throws Error(kDimension) on mismatched set dimensions and
  /// Error(kValidation) when a set is unbounded or lacks the origin in its
  /// interior.
  PlantModel(synthesis::LtiSystem sys, geometry::HPolytope Z, geometry::HPolytope U, geometry::HPolytope W,
             geometry::HPolytope V);
};

enum class DeltaMode { kExact, kBox };

std::string_view to_string(DeltaMode mode);
DeltaMode delta_mode_from_string(std::string_view name);

/// ξ = (x - x̂, x̂ - x̄) with A_ξ = [[A-LC, 0], [LC, A+BK]],
/// Δ = [[I, -L], [0, L]](W × V), E = [[H, H], [0, K]], Φ = Z × U.
/// Throws Error(kStability) if either diagonal block is not Schur.
rpi::ErrorSystem build_error_system(const PlantModel& plant, const Eigen::MatrixXd& K, const Eigen::MatrixXd& L);

/// `kExact` returns Δ unchanged. `kBox` returns its bounding box inflated by
/// η on every side, as an identity-mapped set.
geometry::MappedSet concretize_delta(const geometry::MappedSet& delta, DeltaMode mode, double eta = 1e-9,
                                     const solver::LpSolver& lp = solver::default_lp_solver());

/// Z̄ = Z ⊖ [H H]R and Ū = U ⊖ [0 K]R. Throws Error(kDisturbanceTooLarge)
/// when either result loses the origin from its interior.
std::pair<geometry::HPolytope, geometry::HPolytope> tighten(const PlantModel& plant, const geometry::HPolytope& R,
                                                            const Eigen::MatrixXd& K,
                                                            const solver::LpSolver& lp = solver::default_lp_solver());

/// Maximal positively invariant set of x⁺ = A_Kf x inside
/// {x : Hx ∈ Z̄, K_f x ∈ Ū}. Throws Error(kExhaustedIterations) after `cap`
/// steps.
geometry::HPolytope terminal_set(const Eigen::MatrixXd& A_Kf, const geometry::HPolytope& Zbar,
                                 const geometry::HPolytope& Ubar, const Eigen::MatrixXd& H,
                                 const Eigen::MatrixXd& Kf, int cap = 1000,
                                 const solver::LpSolver& lp = solver::default_lp_solver());

struct SynthesisConfig {
  Eigen::MatrixXd Q;  // state weight
  Eigen::MatrixXd R;  // input weight
  int N = 13;
  std::optional<Eigen::MatrixXd> K;  // tube gain; LQR with (Q, R) when absent
  std::optional<Eigen::MatrixXd> L;  // observer gain; dual LQR with (Qo, Ro) when absent
  Eigen::MatrixXd Qo;                // identity when empty
  Eigen::MatrixXd Ro;                // identity when empty
  DeltaMode delta_mode = DeltaMode::kExact;
  double eta = 1e-9;
  int k = -1;  // fixed generation index; negative means smallest feasible
  int k_max = 1000;
  int terminal_cap = 1000;
};

struct ControllerArtifact {
  PlantModel plant;
  synthesis::GainSet gains;
  rpi::RpiResult tube;
  geometry::HPolytope Zbar, Ubar, XN;
  int N = 13;
  Eigen::MatrixXd Q, R;
  DeltaMode delta_mode = DeltaMode::kExact;
  double eta = 1e-9;
};

/// Builds the coupled error system of an artifact with its Δ
/// representation.
rpi::ErrorSystem artifact_error_system(const ControllerArtifact& artifact,
                                       const solver::LpSolver& lp = solver::default_lp_solver());

/// K and L default to the LQR gain and the dual-regulator observer gain.
synthesis::GainSet design_gains(const PlantModel& plant, const SynthesisConfig& config);

/// Gains, error system, Δ, tube, tightening, terminal cost and set, then a
/// full validation pass. Errors carry the name of the failing stage.
ControllerArtifact synthesize(const PlantModel& plant, const SynthesisConfig& config,
                              const solver::LpSolver& lp = solver::default_lp_solver());

/// Re-checks every artifact invariant; throws Error(kValidation) naming the
/// first one that fails.
void validate_artifact(const ControllerArtifact& artifact, const solver::LpSolver& lp = solver::default_lp_solver());

/// Sparse QP over [x̄_0 … x̄_N, ū_0 … ū_{N-1}] with cost
/// ‖x̄_N‖²_P + Σ ‖x̄_i‖²_Q + ‖ū_i‖²_R (the QP objective equals this cost).
solver::QpProblem build_qp(const ControllerArtifact& artifact, const Eigen::VectorXd& xbar);

struct MpcSolution {
  solver::SolveStatus status = solver::SolveStatus::kNumericalFailure;
  std::vector<Eigen::VectorXd> x;  // N+1 nominal states
  std::vector<Eigen::VectorXd> u;  // N nominal inputs
  double cost = 0.0;
  std::string detail;

  bool optimal() const { return status == solver::SolveStatus::kOptimal; }
};

MpcSolution solve_mpc(const ControllerArtifact& artifact, const Eigen::VectorXd& xbar,
                      const solver::QpSolver& qp = solver::default_qp_solver());

Eigen::VectorXd control_law(const Eigen::VectorXd& ubar, const Eigen::VectorXd& xbar, const Eigen::VectorXd& xhat,
                            const Eigen::MatrixXd& K);
Eigen::VectorXd observer_update(const synthesis::LtiSystem& sys, const synthesis::GainSet& gains,
                                const Eigen::VectorXd& xhat, const Eigen::VectorXd& u, const Eigen::VectorXd& y);
Eigen::VectorXd nominal_update(const synthesis::LtiSystem& sys, const Eigen::VectorXd& xbar,
                               const Eigen::VectorXd& ubar);

struct ControllerState {
  Eigen::VectorXd xhat;
  Eigen::VectorXd xbar;
  int k = 0;

  /// The nominal state starts at the estimate.
  static ControllerState start(const Eigen::VectorXd& xhat0) { return {xhat0, xhat0, 0}; }
};

}  // namespace tubempc::mpc
