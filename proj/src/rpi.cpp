#include "tubempc/rpi.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tubempc/log.hpp"
#include "tubempc/synthesis.hpp"

namespace tubempc::rpi {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::HPolytope;
using geometry::MappedSet;

namespace {

// Offsets beyond kBoxCap·max(1, ‖d‖∞) are reported as unbounded.
constexpr double kBoxCap = 1e6;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_compact_with_interior_origin(const HPolytope& P, const char* what) {
  if (!P.origin_in_interior()) throw Error(ErrorKind::kValidation, std::string(what) + " must contain the origin in its interior");
  if (!P.is_bounded()) throw Error(ErrorKind::kValidation, std::string(what) + " must be bounded");
}

// Stacks rows and offsets that have already been paired up.
HPolytope make_set(const std::vector<VectorXd>& rows, const std::vector<double>& offsets, int n) {
  MatrixXd H(rows.size(), n);
  VectorXd b(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    H.row(i) = rows[i].transpose();
    b[i] = offsets[i];
  }
  return HPolytope(std::move(H), std::move(b));
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kAlgorithm1: return "algorithm1";
    case Method::kSdt: return "sdt";
    case Method::kTroddenPolygon: return "polygon";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  if (name == "algorithm1") return Method::kAlgorithm1;
  if (name == "sdt") return Method::kSdt;
  if (name == "polygon") return Method::kTroddenPolygon;
  throw Error(ErrorKind::kValidation, "unknown RPI method '" + std::string(name) + "'");
}

ErrorSystem::ErrorSystem(MatrixXd a_e, MappedSet d, MatrixXd e, HPolytope p, bool validate)
    : A_e(std::move(a_e)), delta(std::move(d)), E(std::move(e)), phi(std::move(p)) {
  const int ne = n();
  if (A_e.cols() != ne || ne == 0) throw Error(ErrorKind::kDimension, "A_e must be square and nonempty");
  if (delta.dim() != ne) throw Error(ErrorKind::kDimension, "Δ must live in the error space");
  if (E.cols() != ne) throw Error(ErrorKind::kDimension, "E must have n_e columns");
  if (phi.dim() != E.rows()) throw Error(ErrorKind::kDimension, "Φ must live in the output space of E");
  if (!A_e.allFinite() || !E.allFinite()) throw Error(ErrorKind::kValidation, "error system has non-finite entries");
  if (!validate) return;
  const double rho = synthesis::spectral_radius(A_e);
  if (rho >= 1.0) throw Error(ErrorKind::kStability, "A_e is not Schur stable (ρ=" + std::to_string(rho) + ")");
  if (!synthesis::pbh_observable(A_e, E)) throw Error(ErrorKind::kObservability, "(A_e, E) is not observable");
  check_compact_with_interior_origin(phi, "Φ");
  check_compact_with_interior_origin(delta.base, "Δ");
}

ErrorSystem::ErrorSystem(MatrixXd a_e, const HPolytope& d, MatrixXd e, HPolytope p, bool validate)
    : ErrorSystem(std::move(a_e), MappedSet::identity(d), std::move(e), std::move(p), validate) {}

MatrixXd face_matrix(const ErrorSystem& sys, int k) {
  if (k < 0) throw Error(ErrorKind::kValidation, "k must be nonnegative");
  const MatrixXd base = sys.output_faces();
  std::vector<VectorXd> rows;
  MatrixXd block = base;
  int dropped = 0;
  for (int j = 0; j <= k; ++j) {
    for (int i = 0; i < block.rows(); ++i) {
      if (block.row(i).lpNorm<Eigen::Infinity>() <= 1e-300) {
        ++dropped;
      } else {
        rows.push_back(block.row(i).transpose());
      }
    }
    block = block * sys.A_e;
  }
  if (dropped > 0) log::warn("face_matrix: dropped " + std::to_string(dropped) + " zero rows");
  MatrixXd H(rows.size(), sys.n());
  for (size_t i = 0; i < rows.size(); ++i) H.row(i) = rows[i].transpose();
  return H;
}

MatrixXd unique_directions(const MatrixXd& H, double angle_tol) {
  std::vector<VectorXd> kept;
  for (int i = 0; i < H.rows(); ++i) {
    const double norm = H.row(i).norm();
    if (norm == 0.0) continue;
    const VectorXd u = H.row(i).transpose() / norm;
    bool repeat = false;
    for (const auto& v : kept) {
      // ‖u - v‖ ≈ angle for small angles, and is robust where acos is not.
      if ((u - v).norm() <= angle_tol) {
        repeat = true;
        break;
      }
    }
    if (!repeat) kept.push_back(u);
  }
  MatrixXd out(kept.size(), H.cols());
  for (size_t i = 0; i < kept.size(); ++i) out.row(i) = kept[i].transpose();
  return out;
}

LpOutcome trodden_lp(const MatrixXd& H_r, const MatrixXd& A_e, const MappedSet& delta, const solver::LpSolver& lp) {
  const int nr = static_cast<int>(H_r.rows());
  const int ne = static_cast<int>(H_r.cols());
  if (A_e.rows() != ne || A_e.cols() != ne) throw Error(ErrorKind::kDimension, "trodden_lp: A_e does not match H_r");
  if (delta.dim() != ne) throw Error(ErrorKind::kDimension, "trodden_lp: Δ does not match H_r");

  // The disturbance variables only appear in d_i ≤ h_iᵀω_i and on the
  // right-hand side of the coupling rows, so at the optimum d_i = S_Δ(h_i).
  VectorXd d(nr);
  for (int i = 0; i < nr; ++i) d[i] = geometry::support_value(delta, H_r.row(i).transpose(), lp);

  // Variables [c; ξ_1; …; ξ_nr]. The LP is solved with artificial bounds
  // |c|, |ξ| ≤ U written as explicit rows. Zero multipliers on those rows
  // certify the boxed optimum as the true one; otherwise U grows until the
  // cap, past which the LP is declared unbounded.
  const int nvar = nr + nr * ne;
  const MatrixXd HA = H_r * A_e;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(nr) * (ne + 1) * (nr + 1) + 2 * nvar);
  const int core_rows = nr + nr * nr;
  VectorXd rhs = VectorXd::Zero(core_rows + 2 * nvar);
  for (int i = 0; i < nr; ++i) {
    // c_i - h_iᵀA_e ξ_i ≤ 0
    t.emplace_back(i, i, 1.0);
    for (int j = 0; j < ne; ++j) {
      if (HA(i, j) != 0.0) t.emplace_back(i, nr + i * ne + j, -HA(i, j));
    }
  }
  int row = nr;
  for (int i = 0; i < nr; ++i) {
    // H_r ξ_i - c ≤ d
    for (int l = 0; l < nr; ++l, ++row) {
      for (int j = 0; j < ne; ++j) {
        if (H_r(l, j) != 0.0) t.emplace_back(row, nr + i * ne + j, H_r(l, j));
      }
      t.emplace_back(row, l, -1.0);
      rhs[row] = d[l];
    }
  }
  for (int v = 0; v < nvar; ++v) {
    t.emplace_back(core_rows + 2 * v, v, 1.0);
    t.emplace_back(core_rows + 2 * v + 1, v, -1.0);
  }
  solver::LpProblem problem;
  problem.sense = solver::Sense::kMaximize;
  problem.objective = VectorXd::Zero(nvar);
  problem.objective.head(nr).setOnes();
  problem.A_ineq.resize(core_rows + 2 * nvar, nvar);
  problem.A_ineq.setFromTriplets(t.begin(), t.end());
  problem.A_ineq.makeCompressed();

  LpOutcome out;
  out.variables = nvar + nr;  // c, d and the stacked ξ
  out.constraints = core_rows + nr;

  const double scale = std::max(1.0, d.lpNorm<Eigen::Infinity>());
  for (double U = 1e2 * scale; U <= kBoxCap * scale; U *= 1e2) {
    rhs.tail(2 * nvar).setConstant(U);
    problem.b_ineq = rhs;
    const auto r = lp.solve_lp(problem);
    if (r.status == solver::SolveStatus::kInfeasible) {
      // ξ = 0, c = 0 is always feasible since d ≥ 0.
      throw Error(ErrorKind::kSolverFailure, "RPI LP reported infeasible: " + r.detail);
    }
    if (r.status != solver::SolveStatus::kOptimal) throw Error(ErrorKind::kSolverFailure, "RPI LP failed: " + r.detail);
    const double box_dual = r.ineq_duals.tail(2 * nvar).cwiseAbs().maxCoeff();
    const double box_slack = (U - r.x.cwiseAbs().array()).minCoeff();
    if (box_dual <= 1e-6 && box_slack > 1e-3 * U) {
      out.bounded = true;
      out.b = r.x.head(nr) + d;
      out.objective = out.b.sum();
      return out;
    }
  }
  return out;
}

namespace {

std::optional<RpiResult> rpi_with_faces(const ErrorSystem& sys, const MatrixXd& faces, int k, Method method,
                                        const RpiOptions& options, const solver::LpSolver& lp) {
  const auto start = std::chrono::steady_clock::now();
  const MatrixXd H_r = unique_directions(faces);
  const LpOutcome o = trodden_lp(H_r, sys.A_e, sys.delta, lp);
  if (!o.bounded) return std::nullopt;
  HPolytope set(H_r, o.b);
  if (options.prune) set = geometry::remove_redundancy(set, options.tolerance, lp);
  RpiResult result{std::move(set), k, method, {}};
  result.diagnostics.lp_objective = o.objective;
  result.diagnostics.candidate_rows = static_cast<int>(H_r.rows());
  result.diagnostics.rows = result.set.rows();
  result.diagnostics.lp_variables = o.variables;
  result.diagnostics.lp_constraints = o.constraints;
  result.diagnostics.wall_time_s = seconds_since(start);
  return result;
}

}  // namespace

std::optional<RpiResult> try_compute_rpi(const ErrorSystem& sys, int k, const RpiOptions& options,
                                         const solver::LpSolver& lp) {
  return rpi_with_faces(sys, face_matrix(sys, k), k, Method::kAlgorithm1, options, lp);
}

RpiResult compute_rpi(const ErrorSystem& sys, int k, const RpiOptions& options, const solver::LpSolver& lp) {
  auto r = try_compute_rpi(sys, k, options, lp);
  if (!r) throw Error(ErrorKind::kRpiUnbounded, "no RPI set with the normals of generation k=" + std::to_string(k));
  return std::move(*r);
}

namespace {

// The minimal RPI set has support Σ_j S_Δ((A_eʲ)ᵀf) along f, so a partial sum
// above an offset of Φ rules out every admissible RPI set.
void check_mrpi_fits_phi(const ErrorSystem& sys, double tol, const solver::LpSolver& lp) {
  const MatrixXd F = sys.output_faces();
  for (int r = 0; r < F.rows(); ++r) {
    VectorXd g = F.row(r).transpose();
    const double floor = 1e-12 * std::max(1.0, g.norm());
    double sum = 0.0;
    for (int j = 0; j < 10000 && g.norm() > floor; ++j) {
      sum += geometry::support_value(sys.delta, g, lp);
      if (sum > sys.phi.b()[r] + tol) {
        throw Error(ErrorKind::kDisturbanceTooLarge,
                    "the minimal RPI set leaves Φ along output face " + std::to_string(r) + " (support ≥ " +
                        std::to_string(sum) + " > " + std::to_string(sys.phi.b()[r]) + ")");
      }
      g = sys.A_e.transpose() * g;
    }
  }
}

}  // namespace

RpiResult find_min_k(const ErrorSystem& sys, int k_max, const RpiOptions& options, const solver::LpSolver& lp,
                     int k_min) {
  if (k_max < 0 || k_min < 0) throw Error(ErrorKind::kValidation, "k bounds must be nonnegative");
  if (options.require_admissible) check_mrpi_fits_phi(sys, options.tolerance, lp);
  for (int k = k_min; k <= k_max; ++k) {
    auto r = try_compute_rpi(sys, k, options, lp);
    if (!r) {
      log::info("RPI LP unbounded at k=" + std::to_string(k));
      continue;
    }
    if (!options.require_admissible) return std::move(*r);
    const auto v = verify_rpi(r->set, sys, options.tolerance, lp);
    if (v.admissible) return std::move(*r);
    log::info("RPI set at k=" + std::to_string(k) + " leaves Φ by " + std::to_string(v.admissibility_violation));
  }
  throw Error(ErrorKind::kExhaustedK, "no constraint admissible RPI set found for k ≤ " + std::to_string(k_max));
}

MatrixXd polygon_faces(int r, int dim) {
  if (dim != 2) throw Error(ErrorKind::kDimension, "polygon faces are only defined in two dimensions");
  if (r < 3) throw Error(ErrorKind::kValidation, "a polygon needs at least three sides");
  MatrixXd H(r, 2);
  for (int i = 0; i < r; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / r;
    H(i, 0) = std::cos(angle);
    H(i, 1) = std::sin(angle);
  }
  return H;
}

RpiResult polygon_rpi(const ErrorSystem& sys, int r, const RpiOptions& options, const solver::LpSolver& lp) {
  auto result = rpi_with_faces(sys, polygon_faces(r, sys.n()), 0, Method::kTroddenPolygon, options, lp);
  if (!result) throw Error(ErrorKind::kRpiUnbounded, "no RPI set with " + std::to_string(r) + "-gon normals");
  return std::move(*result);
}

namespace {

HPolytope delta_halfspace(const ErrorSystem& sys) {
  auto h = sys.delta_hpolytope();
  if (!h) throw Error(ErrorKind::kValidation, "this construction needs Δ in halfspace form (use box mode)");
  return std::move(*h);
}

}  // namespace

int sdt_kstar(const ErrorSystem& sys, double eps, int cap, const solver::LpSolver& lp) {
  if (!(eps > 0.0)) throw Error(ErrorKind::kValidation, "ε must be positive");
  const HPolytope target = geometry::scale(delta_halfspace(sys), eps / (1.0 + eps));
  MatrixXd Ak = sys.A_e;
  for (int k = 1; k <= cap; ++k) {
    if (geometry::is_subset(MappedSet(Ak * sys.delta.M, sys.delta.base), target, default_tolerance(), lp)) return k;
    Ak = Ak * sys.A_e;
  }
  throw Error(ErrorKind::kExhaustedK, "k* not found within " + std::to_string(cap) + " powers");
}

HPolytope sdt_container(const ErrorSystem& sys, double eps, int kstar, const solver::LpSolver& lp) {
  if (kstar < 1) throw Error(ErrorKind::kValidation, "k* must be at least 1");
  const MatrixXd Hc = sys.output_faces();
  VectorXd bc = VectorXd::Zero(Hc.rows());
  MatrixXd rows = Hc;
  for (int j = 0; j < kstar; ++j) {
    for (int i = 0; i < Hc.rows(); ++i) bc[i] += geometry::support_value(sys.delta, rows.row(i).transpose(), lp);
    rows = rows * sys.A_e;
  }
  return HPolytope(Hc, (1.0 + eps) * bc);
}

SdtResult sdt_recursion(const ErrorSystem& sys, double eps, int cap, const solver::LpSolver& lp) {
  const auto start = std::chrono::steady_clock::now();
  const int kstar = sdt_kstar(sys, eps, cap, lp);
  const HPolytope container = sdt_container(sys, eps, kstar, lp);
  const MatrixXd Hc = sys.output_faces();
  const int n = sys.n();

  // Unnormalized rows H_φE A_e^k with offsets r_k.
  MatrixXd rows = Hc;
  VectorXd r = container.b().cwiseProduct(Hc.rowwise().norm());
  HPolytope current = container;
  for (int k = 1; k <= cap; ++k) {
    for (int i = 0; i < rows.rows(); ++i) r[i] -= geometry::support_value(sys.delta, rows.row(i).transpose(), lp);
    rows = rows * sys.A_e;

    std::vector<VectorXd> added;
    std::vector<double> offsets;
    for (int i = 0; i < rows.rows(); ++i) {
      const double norm = rows.row(i).norm();
      if (norm <= 1e-300) {
        if (r[i] < -default_tolerance()) throw Error(ErrorKind::kEmptySet, "SDT recursion produced an empty set");
        continue;
      }
      // The container only bounds H_φE e, so early supports may be unbounded.
      const auto s = geometry::support(current, rows.row(i).transpose(), lp);
      if (!s.bounded || s.value > r[i] + default_tolerance() * norm) {
        added.push_back(rows.row(i).transpose());
        offsets.push_back(r[i]);
      }
    }
    if (added.empty()) {
      SdtResult out{geometry::remove_redundancy(current, default_tolerance(), lp), k, kstar, container, 0.0};
      out.wall_time_s = seconds_since(start);
      return out;
    }
    current = geometry::intersect(current, make_set(added, offsets, n));
    if (current.is_empty(lp)) throw Error(ErrorKind::kEmptySet, "SDT recursion produced an empty set");
    current = geometry::remove_redundancy(current, default_tolerance(), lp);
  }
  throw Error(ErrorKind::kExhaustedK, "SDT recursion did not terminate within " + std::to_string(cap) + " steps");
}

VerifyReport verify_rpi(const HPolytope& R, const ErrorSystem& sys, double tol, const solver::LpSolver& lp) {
  if (R.dim() != sys.n()) throw Error(ErrorKind::kDimension, "verify_rpi: set dimension mismatch");
  VerifyReport report;
  report.invariance_violation = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < R.rows(); ++i) {
    const VectorXd h = R.H().row(i).transpose();
    const auto s = geometry::support(R, sys.A_e.transpose() * h, lp);
    const double lhs = s.bounded ? s.value + geometry::support_value(sys.delta, h, lp)
                                 : std::numeric_limits<double>::infinity();
    report.invariance_violation = std::max(report.invariance_violation, lhs - R.b()[i]);
  }
  report.admissibility_violation = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < sys.phi.rows(); ++j) {
    const auto s = geometry::support(R, sys.E.transpose() * sys.phi.H().row(j).transpose(), lp);
    const double v = s.bounded ? s.value : std::numeric_limits<double>::infinity();
    report.admissibility_violation = std::max(report.admissibility_violation, v - sys.phi.b()[j]);
  }
  report.invariant = report.invariance_violation <= tol;
  report.admissible = report.admissibility_violation <= tol;
  return report;
}

}  // namespace tubempc::rpi
