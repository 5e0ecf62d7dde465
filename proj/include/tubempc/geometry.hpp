#pragma once

#include <Eigen/Core>

#include <optional>
#include <utility>

#include "tubempc/error.hpp"
#include "tubempc/solver.hpp"

namespace tubempc::geometry {

/// Convex polyhedron {x : Hx ≤ b}.
///
/// Rows are normalized to unit Euclidean norm on construction so that every
/// tolerance is scale-free. Values are immutable.
class HPolytope {
 public:
  /// Throws Error(kValidation) on non-finite data, zero rows or an empty row
  /// set, Error(kDimension) on mismatched sizes.
  HPolytope(Eigen::MatrixXd H, Eigen::VectorXd b);

  /// Axis-aligned box lower ≤ x ≤ upper.
  static HPolytope box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);
  /// Symmetric box |x_i| ≤ half_widths_i.
  static HPolytope symmetric_box(const Eigen::VectorXd& half_widths);

  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::VectorXd& b() const { return b_; }
  int dim() const { return static_cast<int>(H_.cols()); }
  int rows() const { return static_cast<int>(H_.rows()); }

  bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const;
  /// Decided by one feasibility LP.
  bool is_empty(const solver::LpSolver& lp = solver::default_lp_solver()) const;
  /// All offsets strictly positive (after normalization).
  bool origin_in_interior(double tol = 0.0) const { return b_.minCoeff() > tol; }
  /// Every coordinate direction has a finite support.
  bool is_bounded(const solver::LpSolver& lp = solver::default_lp_solver()) const;

  /// If the rows describe an axis-aligned box (each row ±e_i, every axis
  /// bounded on both sides), returns its (lower, upper) corners.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> as_box(double tol = 1e-12) const;

 private:
  Eigen::MatrixXd H_;
  Eigen::VectorXd b_;
};

/// Image M·base of a polytope under a linear map. The support in direction a
/// is the support of `base` in direction Mᵀa, so the image is never formed.
struct MappedSet {
  Eigen::MatrixXd M;
  HPolytope base;

  MappedSet(Eigen::MatrixXd map, HPolytope base_set);
  static MappedSet identity(HPolytope set);

  int dim() const { return static_cast<int>(M.rows()); }
  /// Halfspace form {x : H_base M⁻¹x ≤ b_base}; only for square invertible M.
  std::optional<HPolytope> to_hpolytope() const;
};

struct SupportResult {
  bool bounded = true;
  double value = 0.0;
  Eigen::VectorXd maximizer;
};

/// max_{x∈P} aᵀx. Unbounded is reported through `bounded = false`; an empty P
/// throws Error(kEmptySet) and solver trouble Error(kSolverFailure).
SupportResult support(const HPolytope& P, const Eigen::VectorXd& a,
                      const solver::LpSolver& lp = solver::default_lp_solver());
SupportResult support(const MappedSet& P, const Eigen::VectorXd& a,
                      const solver::LpSolver& lp = solver::default_lp_solver());

/// Support value; throws Error(kSolverFailure) when unbounded.
double support_value(const HPolytope& P, const Eigen::VectorXd& a,
                     const solver::LpSolver& lp = solver::default_lp_solver());
double support_value(const MappedSet& P, const Eigen::VectorXd& a,
                     const solver::LpSolver& lp = solver::default_lp_solver());

/// A ⊖ C·B = {a : H_a a ≤ b_a - δ}, δ_i = S_B(Cᵀh_i). The result may be empty.
HPolytope pontryagin_diff(const HPolytope& A, const Eigen::MatrixXd& C, const HPolytope& B,
                          const solver::LpSolver& lp = solver::default_lp_solver());

/// P ⊆ Q, checked row by row of Q through support functions of P.
bool is_subset(const HPolytope& P, const HPolytope& Q, double tol = default_tolerance(),
               const solver::LpSolver& lp = solver::default_lp_solver());
bool is_subset(const MappedSet& P, const HPolytope& Q, double tol = default_tolerance(),
               const solver::LpSolver& lp = solver::default_lp_solver());

HPolytope intersect(const HPolytope& P, const HPolytope& Q);

/// Drops duplicate rows, then every row whose maximum over the remaining rows
/// is at most b_i - tol.
HPolytope remove_redundancy(const HPolytope& P, double tol = default_tolerance(),
                            const solver::LpSolver& lp = solver::default_lp_solver());

/// {αx : x ∈ P} for α ≥ 0.
HPolytope scale(const HPolytope& P, double alpha);

/// P × Q as a block-diagonal stack.
HPolytope cross_product(const HPolytope& P, const HPolytope& Q);

}  // namespace tubempc::geometry
