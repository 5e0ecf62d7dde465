#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tubempc/geometry.hpp"
#include "tubempc/solver.hpp"
#include "tubempc/tube_mpc.hpp"

namespace tubempc::sim {

/// mt19937_64 with a fixed real mapping ((x >> 11)·2⁻⁵³), so sequences do
/// not depend on the standard library's distribution implementations.
class Rng {
 public:
  static constexpr const char* kName = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

/// Seed of run `index` in a batch started from `seed` (splitmix64 mix).
std::uint64_t run_seed(std::uint64_t seed, std::uint64_t index);

enum class DisturbanceMode { kUniform, kZero };

std::string_view to_string(DisturbanceMode mode);
DisturbanceMode disturbance_mode_from_string(std::string_view name);

struct SimConfig {
  int steps = 50;
  std::uint64_t seed = 1;
  /// Fixed x̂_0; otherwise x̂_0 is drawn uniformly from [x0_lower, x0_upper].
  std::optional<Eigen::VectorXd> x0;
  Eigen::VectorXd x0_lower, x0_upper;
  /// Half-widths of the box x_0 - x̂_0 is drawn from. Empty means x_0 = x̂_0.
  Eigen::VectorXd initial_error;
  DisturbanceMode disturbance = DisturbanceMode::kUniform;
  /// Scales sampled w and v; values above 1 leave the design sets.
  double disturbance_scale = 1.0;
  /// Throw Error(kInvariantViolation) on a tube exit or a QP failure after
  /// the first step; otherwise record it and, for QP failures, stop.
  bool strict = true;

  /// Throws Error(kValidation) on inconsistent fields.
  void validate(int n) const;
};

/// Uniform sample from an axis-aligned box. Throws Error(kNonBoxSet) for any
/// other polytope.
Eigen::VectorXd sample_disturbance(const geometry::HPolytope& set, Rng& rng);

struct StepRecord {
  int k = 0;
  Eigen::VectorXd x, xhat, xbar, u, ubar, z, w, v, xi;
  solver::SolveStatus qp_status = solver::SolveStatus::kOptimal;
  double stage_cost = 0.0;
};

struct TrajectoryLog {
  std::vector<StepRecord> steps;
  Eigen::VectorXd x_final, xhat_final, xbar_final;
  bool completed = true;  // false when a QP failure stopped the run
  std::string note;
};

/// Per step: QP at x̄_k, u_k = ū_k + K(x̂_k - x̄_k), plant step with w_k,
/// measurement with v_k, observer and nominal updates.
TrajectoryLog run_closed_loop(const mpc::ControllerArtifact& artifact, const SimConfig& cfg,
                              const solver::QpSolver& qp = solver::default_qp_solver());

struct DecayFit {
  bool fitted = false;  // at least three points above the threshold
  double rate = 0.0;    // λ
  double scale = 0.0;   // c
  double r_squared = 0.0;
  int points = 0;
};

/// Least-squares fit of log d_k = log c + k log λ over the steps with
/// d_k > threshold.
DecayFit fit_geometric_decay(const std::vector<double>& distance, double threshold = 1e-8);

struct AuditReport {
  std::vector<std::string> violations;
  int constraint_violations = 0;
  int tube_exits = 0;
  int qp_failures = 0;
  double cost = 0.0;              // Σ x_kᵀQx_k + u_kᵀRu_k
  std::vector<double> distance;   // ∞-norm distance of x_k to [I I]R
  DecayFit decay;

  bool clean() const { return constraint_violations == 0 && tube_exits == 0 && qp_failures == 0; }
};

/// Checks z_k ∈ Z, u_k ∈ U and ξ_k ∈ R with slack `tol`, and fits the decay
/// of the distance to [I I]R.
AuditReport audit(const TrajectoryLog& log, const mpc::ControllerArtifact& artifact, double tol = 1e-9,
                  const solver::LpSolver& lp = solver::default_lp_solver());

/// ∞-norm distance of x to the image [I I]R.
double distance_to_tube(const Eigen::VectorXd& x, const geometry::HPolytope& R,
                        const solver::LpSolver& lp = solver::default_lp_solver());

struct GridAxis {
  double lo = 0.0, hi = 0.0;
  int count = 0;
};

/// Parses "x1min:x1max:n1,x2min:x2max:n2".
std::pair<GridAxis, GridAxis> parse_grid(const std::string& spec);

struct FeasiblePoint {
  double x1 = 0.0, x2 = 0.0;
  bool feasible = false;
};

/// Feasibility of the MPC QP with x̄_0 = x_0 over a grid of the first two
/// state coordinates; the remaining coordinates are held at zero.
std::vector<FeasiblePoint> feasible_region_scan(const mpc::ControllerArtifact& artifact, const GridAxis& a1,
                                                const GridAxis& a2,
                                                const solver::QpSolver& qp = solver::default_qp_solver());

/// Fixed column order: k, x_*, xhat_*, xbar_*, u_*, ubar_*, z_*, w_*, v_*,
/// xi_*, qp_status, stage_cost. Numbers are written with 17 significant
/// digits so logs compare bit for bit.
void write_csv(std::ostream& out, const TrajectoryLog& log);
void write_feasible_csv(std::ostream& out, const std::vector<FeasiblePoint>& points);

}  // namespace tubempc::sim
