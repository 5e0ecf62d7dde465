#pragma once

#include <Eigen/Core>

#include <optional>
#include <string_view>

#include "tubempc/geometry.hpp"

namespace tubempc::rpi {

enum class Method { kAlgorithm1, kSdt, kTroddenPolygon };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

/// Autonomous error dynamics e⁺ = A_e e + δ, δ ∈ Δ, with output constraint
/// E e ∈ Φ. Δ is kept as a mapped set so that generator images (which may be
/// lower dimensional) never need a halfspace form.
struct ErrorSystem {
  Eigen::MatrixXd A_e;
  geometry::MappedSet delta;
  Eigen::MatrixXd E;
  geometry::HPolytope phi;

  /// With `validate` set, checks Schur stability (kStability), PBH
  /// observability of (A_e, E) (kObservability), and that Φ and the base of Δ
  /// are bounded with the origin in their interior (kValidation).
  ErrorSystem(Eigen::MatrixXd A_e, geometry::MappedSet delta, Eigen::MatrixXd E, geometry::HPolytope phi,
              bool validate = true);
  ErrorSystem(Eigen::MatrixXd A_e, const geometry::HPolytope& delta, Eigen::MatrixXd E, geometry::HPolytope phi,
              bool validate = true);

  int n() const { return static_cast<int>(A_e.rows()); }
  /// H_φE.
  Eigen::MatrixXd output_faces() const { return phi.H() * E; }
  std::optional<geometry::HPolytope> delta_hpolytope() const { return delta.to_hpolytope(); }
};

struct RpiDiagnostics {
  double lp_objective = 0.0;
  int candidate_rows = 0;  // rows of H_r fed to the LP after deduplication
  int rows = 0;            // rows kept in the returned set
  int lp_variables = 0;
  int lp_constraints = 0;
  double wall_time_s = 0.0;
};

struct RpiResult {
  geometry::HPolytope set;
  int k = 0;
  Method method = Method::kAlgorithm1;
  RpiDiagnostics diagnostics;
};

struct RpiOptions {
  bool prune = true;  // remove redundant rows from the returned set
  // find_min_k only: also require E·R ⊆ Φ before accepting a k.
  bool require_admissible = true;
  double tolerance = default_tolerance();
};

/// Rows H_φE A_e^j for j = 0..k. Rows annihilated by a nilpotent A_e are
/// dropped (with a warning).
Eigen::MatrixXd face_matrix(const ErrorSystem& sys, int k);

/// Normalizes rows and drops those whose direction repeats an earlier one
/// within `angle_tol` radians.
Eigen::MatrixXd unique_directions(const Eigen::MatrixXd& H, double angle_tol = 1e-10);

struct LpOutcome {
  bool bounded = false;
  Eigen::VectorXd b;  // offsets c* + d*, one per row of H_r
  double objective = 0.0;
  int variables = 0;
  int constraints = 0;
};

/// Smallest offsets b with {e : H_r e ≤ b} robustly invariant under A_e and
/// Δ, from a single LP. `bounded = false` means no such set exists for these
/// normals. Throws Error(kSolverFailure) on numerical trouble.
LpOutcome trodden_lp(const Eigen::MatrixXd& H_r, const Eigen::MatrixXd& A_e, const geometry::MappedSet& delta,
                     const solver::LpSolver& lp = solver::default_lp_solver());

/// One pass of the k-indexed construction; nullopt when the LP is unbounded.
std::optional<RpiResult> try_compute_rpi(const ErrorSystem& sys, int k, const RpiOptions& options = {},
                                         const solver::LpSolver& lp = solver::default_lp_solver());
/// As above but throws Error(kRpiUnbounded) on failure.
RpiResult compute_rpi(const ErrorSystem& sys, int k, const RpiOptions& options = {},
                      const solver::LpSolver& lp = solver::default_lp_solver());
/// Smallest k in [k_min, k_max] for which compute_rpi succeeds (and, unless
/// disabled in the options, gives a constraint admissible set); throws
/// Error(kExhaustedK) otherwise. When admissibility is required and even the
/// minimal RPI set leaves Φ, throws Error(kDisturbanceTooLarge) up front.
RpiResult find_min_k(const ErrorSystem& sys, int k_max, const RpiOptions& options = {},
                     const solver::LpSolver& lp = solver::default_lp_solver(), int k_min = 0);

/// RPI set with the normals of a regular r-gon (2-D systems only).
Eigen::MatrixXd polygon_faces(int r, int dim = 2);
RpiResult polygon_rpi(const ErrorSystem& sys, int r, const RpiOptions& options = {},
                      const solver::LpSolver& lp = solver::default_lp_solver());

/// Smallest k ≥ 1 with (1+ε) A_e^k Δ ⊆ ε Δ. Needs a halfspace form of Δ.
int sdt_kstar(const ErrorSystem& sys, double eps, int cap = 10000,
              const solver::LpSolver& lp = solver::default_lp_solver());

/// {e : H_φE e ≤ (1+ε) Σ_{j<k*} S_Δ((H_φE A_e^j)ᵀ)}.
geometry::HPolytope sdt_container(const ErrorSystem& sys, double eps, int kstar,
                                  const solver::LpSolver& lp = solver::default_lp_solver());

struct SdtResult {
  geometry::HPolytope set;        // P_∞(ε)
  int kbar = 0;                   // iterations until the new rows were redundant
  int kstar = 0;
  geometry::HPolytope container;  // 𝒞(ε)
  double wall_time_s = 0.0;
};

/// Tightens the container by r_k = r_{k-1} - S_Δ((H_φE A_e^{k-1})ᵀ) on rows
/// H_φE A_e^k until an iteration adds only redundant rows. Throws
/// Error(kExhaustedK) after `cap` iterations and Error(kEmptySet) if the set
/// becomes empty.
SdtResult sdt_recursion(const ErrorSystem& sys, double eps, int cap = 10000,
                        const solver::LpSolver& lp = solver::default_lp_solver());

struct VerifyReport {
  bool invariant = false;
  bool admissible = false;
  double invariance_violation = 0.0;     // max_i S_R(A_eᵀh_i) + S_Δ(h_i) - b_i
  double admissibility_violation = 0.0;  // max_j S_R(Eᵀφ_j) - b_φ,j
};

/// Checks A_e R ⊕ Δ ⊆ R row by row and E R ⊆ Φ.
VerifyReport verify_rpi(const geometry::HPolytope& R, const ErrorSystem& sys, double tol = default_tolerance(),
                        const solver::LpSolver& lp = solver::default_lp_solver());

}  // namespace tubempc::rpi
