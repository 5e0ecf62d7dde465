#include "tubempc/tube_mpc.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "tubempc/log.hpp"

namespace tubempc::mpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::HPolytope;
using geometry::MappedSet;

namespace {

void check_constraint_set(const HPolytope& P, int dim, const char* name) {
  if (P.dim() != dim) {
    throw Error(ErrorKind::kDimension, std::string(name) + " has dimension " + std::to_string(P.dim()) +
                                           ", expected " + std::to_string(dim));
  }
  if (!P.origin_in_interior()) {
    throw Error(ErrorKind::kValidation, std::string(name) + " must contain the origin in its interior");
  }
  if (!P.is_bounded()) throw Error(ErrorKind::kValidation, std::string(name) + " must be bounded");
}

// Runs one synthesis stage and tags escaping errors with its name.
template <typename F>
auto run_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(e.kind(), std::string(name) + ": " + e.what(), name);
  }
}

double verify_tolerance(const HPolytope& P) { return 1e-7 * std::max(1.0, P.b().lpNorm<Eigen::Infinity>()); }

}  // namespace

PlantModel::PlantModel(synthesis::LtiSystem s, HPolytope z, HPolytope u, HPolytope w, HPolytope v)
    : sys(std::move(s)), Z(std::move(z)), U(std::move(u)), W(std::move(w)), V(std::move(v)) {
  check_constraint_set(Z, sys.o(), "Z");
  check_constraint_set(U, sys.m(), "U");
  check_constraint_set(W, sys.n(), "W");
  check_constraint_set(V, sys.p(), "V");
}

std::string_view to_string(DeltaMode mode) { return mode == DeltaMode::kExact ? "exact" : "box"; }

DeltaMode delta_mode_from_string(std::string_view name) {
  if (name == "exact") return DeltaMode::kExact;
  if (name == "box") return DeltaMode::kBox;
  throw Error(ErrorKind::kValidation, "unknown Δ mode '" + std::string(name) + "' (expected exact or box)");
}

rpi::ErrorSystem build_error_system(const PlantModel& plant, const MatrixXd& K, const MatrixXd& L) {
  const auto& s = plant.sys;
  const int n = s.n(), m = s.m(), p = s.p(), o = s.o();
  if (K.rows() != m || K.cols() != n) throw Error(ErrorKind::kDimension, "K must be m×n");
  if (L.rows() != n || L.cols() != p) throw Error(ErrorKind::kDimension, "L must be n×p");

  const MatrixXd est = s.A - L * s.C;
  const MatrixXd ctl = s.A + s.B * K;
  const double rho_est = synthesis::spectral_radius(est);
  const double rho_ctl = synthesis::spectral_radius(ctl);
  if (rho_est >= 1.0) throw Error(ErrorKind::kStability, "A-LC is not Schur stable (ρ=" + std::to_string(rho_est) + ")");
  if (rho_ctl >= 1.0) throw Error(ErrorKind::kStability, "A+BK is not Schur stable (ρ=" + std::to_string(rho_ctl) + ")");

  MatrixXd A_xi = MatrixXd::Zero(2 * n, 2 * n);
  A_xi.topLeftCorner(n, n) = est;
  A_xi.bottomLeftCorner(n, n) = L * s.C;
  A_xi.bottomRightCorner(n, n) = ctl;

  MatrixXd M = MatrixXd::Zero(2 * n, n + p);
  M.topLeftCorner(n, n).setIdentity();
  M.topRightCorner(n, p) = -L;
  M.bottomRightCorner(n, p) = L;

  MatrixXd E = MatrixXd::Zero(o + m, 2 * n);
  E.topLeftCorner(o, n) = s.H;
  E.topRightCorner(o, n) = s.H;
  E.bottomRightCorner(m, n) = K;

  return rpi::ErrorSystem(std::move(A_xi), MappedSet(std::move(M), geometry::cross_product(plant.W, plant.V)),
                          std::move(E), geometry::cross_product(plant.Z, plant.U));
}

MappedSet concretize_delta(const MappedSet& delta, DeltaMode mode, double eta, const solver::LpSolver& lp) {
  if (mode == DeltaMode::kExact) return delta;
  if (!(eta >= 0.0)) throw Error(ErrorKind::kValidation, "η must be nonnegative");
  const int n = delta.dim();
  VectorXd lower(n), upper(n);
  for (int i = 0; i < n; ++i) {
    upper[i] = geometry::support_value(delta, VectorXd::Unit(n, i), lp) + eta;
    lower[i] = -geometry::support_value(delta, -VectorXd::Unit(n, i), lp) - eta;
  }
  return MappedSet::identity(HPolytope::box(lower, upper));
}

std::pair<HPolytope, HPolytope> tighten(const PlantModel& plant, const HPolytope& R, const MatrixXd& K,
                                        const solver::LpSolver& lp) {
  const auto& s = plant.sys;
  const int n = s.n();
  if (R.dim() != 2 * n) throw Error(ErrorKind::kDimension, "tube must live in the 2n-dimensional error space");
  MatrixXd to_z(s.o(), 2 * n);
  to_z << s.H, s.H;
  MatrixXd to_u = MatrixXd::Zero(s.m(), 2 * n);
  to_u.rightCols(n) = K;
  HPolytope Zbar = geometry::pontryagin_diff(plant.Z, to_z, R, lp);
  HPolytope Ubar = geometry::pontryagin_diff(plant.U, to_u, R, lp);
  for (const auto& [set, name] : {std::pair{&Zbar, "Z"}, std::pair{&Ubar, "U"}}) {
    const int i = [&] {
      Eigen::Index idx;
      set->b().minCoeff(&idx);
      return static_cast<int>(idx);
    }();
    if (set->b()[i] <= 0.0) {
      throw Error(ErrorKind::kDisturbanceTooLarge,
                  std::string("tightened ") + name + " loses the origin: row " + std::to_string(i) +
                      " offset " + std::to_string(set->b()[i]));
    }
  }
  return {std::move(Zbar), std::move(Ubar)};
}

HPolytope terminal_set(const MatrixXd& A_Kf, const HPolytope& Zbar, const HPolytope& Ubar, const MatrixXd& H,
                       const MatrixXd& Kf, int cap, const solver::LpSolver& lp) {
  const int n = static_cast<int>(A_Kf.rows());
  if (H.cols() != n || Kf.cols() != n || H.rows() != Zbar.dim() || Kf.rows() != Ubar.dim()) {
    throw Error(ErrorKind::kDimension, "terminal_set: inconsistent dimensions");
  }
  MatrixXd G(Zbar.rows() + Ubar.rows(), n);
  G << Zbar.H() * H, Ubar.H() * Kf;
  VectorXd g(G.rows());
  g << Zbar.b(), Ubar.b();

  std::vector<VectorXd> rows;
  std::vector<double> offsets;
  auto append = [&](const VectorXd& r, double off) {
    rows.push_back(r);
    offsets.push_back(off);
  };
  auto current = [&] {
    MatrixXd Hs(rows.size(), n);
    VectorXd bs(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      Hs.row(i) = rows[i].transpose();
      bs[i] = offsets[i];
    }
    return HPolytope(std::move(Hs), std::move(bs));
  };

  const double zero_row = 1e-13 * std::max(1.0, G.lpNorm<Eigen::Infinity>());
  for (int i = 0; i < G.rows(); ++i) {
    if (G.row(i).norm() > zero_row) append(G.row(i).transpose(), g[i]);
  }
  if (rows.empty()) throw Error(ErrorKind::kValidation, "terminal_set: no constraint acts on the state");

  const double tol = default_tolerance();
  MatrixXd power = A_Kf;
  for (int t = 1; t <= cap; ++t) {
    const HPolytope omega = current();
    const MatrixXd candidates = G * power;
    bool added = false;
    for (int i = 0; i < candidates.rows(); ++i) {
      const double norm = candidates.row(i).norm();
      if (norm <= zero_row) continue;  // 0 ≤ g_i holds trivially
      const VectorXd r = candidates.row(i).transpose() / norm;
      const geometry::SupportResult s = geometry::support(omega, r, lp);
      if (s.bounded && s.value <= g[i] / norm + tol) continue;
      append(r, g[i] / norm);
      added = true;
    }
    if (!added) return geometry::remove_redundancy(omega, tol, lp);
    power = power * A_Kf;
  }
  throw Error(ErrorKind::kExhaustedIterations,
              "terminal set did not converge within " + std::to_string(cap) + " steps");
}

rpi::ErrorSystem artifact_error_system(const ControllerArtifact& artifact, const solver::LpSolver& lp) {
  rpi::ErrorSystem sys = build_error_system(artifact.plant, artifact.gains.K, artifact.gains.L);
  if (artifact.delta_mode == DeltaMode::kExact) return sys;
  return rpi::ErrorSystem(sys.A_e, concretize_delta(sys.delta, artifact.delta_mode, artifact.eta, lp), sys.E,
                          sys.phi);
}

synthesis::GainSet design_gains(const PlantModel& plant, const SynthesisConfig& config) {
  const auto& s = plant.sys;
  const int n = s.n();
  if (config.Q.rows() != n || config.Q.cols() != n) throw Error(ErrorKind::kDimension, "Q must be n×n");
  if (config.R.rows() != s.m() || config.R.cols() != s.m()) throw Error(ErrorKind::kDimension, "R must be m×m");
  if (config.N < 1) throw Error(ErrorKind::kValidation, "horizon N must be at least 1");
  const MatrixXd Qo = config.Qo.size() ? config.Qo : MatrixXd::Identity(n, n);
  const MatrixXd Ro = config.Ro.size() ? config.Ro : MatrixXd::Identity(s.p(), s.p());
  const MatrixXd P = synthesis::solve_dare(s.A, s.B, config.Q, config.R);
  const MatrixXd Kf = synthesis::lqr_gain(s.A, s.B, config.Q, config.R);
  const MatrixXd K = config.K ? *config.K : Kf;
  const MatrixXd L = config.L ? *config.L : synthesis::observer_gain(s.A, s.C, Qo, Ro);
  return synthesis::GainSet(s, K, L, Kf, P);
}

ControllerArtifact synthesize(const PlantModel& plant, const SynthesisConfig& config, const solver::LpSolver& lp) {
  const auto& s = plant.sys;
  const synthesis::GainSet gains = run_stage("gains", [&] { return design_gains(plant, config); });

  const rpi::ErrorSystem coupled = run_stage("error_system", [&] { return build_error_system(plant, gains.K, gains.L); });

  const rpi::ErrorSystem err = run_stage("delta", [&] {
    if (config.delta_mode == DeltaMode::kExact) return coupled;
    return rpi::ErrorSystem(coupled.A_e, concretize_delta(coupled.delta, config.delta_mode, config.eta, lp),
                            coupled.E, coupled.phi);
  });

  rpi::RpiResult tube = run_stage("rpi", [&] {
    if (config.k >= 0) return rpi::compute_rpi(err, config.k, {}, lp);
    try {
      return rpi::find_min_k(err, config.k_max, {}, lp);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDisturbanceTooLarge && e.kind() != ErrorKind::kExhaustedK) throw;
      // No admissible set: take the first bounded one and let tightening
      // report which constraint it breaks.
      rpi::RpiOptions bounded_only;
      bounded_only.require_admissible = false;
      return rpi::find_min_k(err, config.k_max, bounded_only, lp);
    }
  });
  log::info("tube: k=" + std::to_string(tube.k) + ", " + std::to_string(tube.set.rows()) + " rows");

  auto [Zbar, Ubar] = run_stage("tighten", [&] { return tighten(plant, tube.set, gains.K, lp); });

  HPolytope XN = run_stage("terminal_set", [&] {
    return terminal_set(s.A + s.B * gains.Kf, Zbar, Ubar, s.H, gains.Kf, config.terminal_cap, lp);
  });

  ControllerArtifact artifact{plant,         gains,        std::move(tube), std::move(Zbar), std::move(Ubar),
                              std::move(XN), config.N,     config.Q,        config.R,        config.delta_mode,
                              config.eta};
  run_stage("validation", [&] {
    validate_artifact(artifact, lp);
    return 0;
  });
  return artifact;
}

void validate_artifact(const ControllerArtifact& a, const solver::LpSolver& lp) {
  const auto& s = a.plant.sys;
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kValidation, "artifact invariant violated: " + what); };

  synthesis::GainSet(s, a.gains.K, a.gains.L, a.gains.Kf, a.gains.P);
  if (a.N < 1) fail("N ≥ 1");
  if (!synthesis::is_symmetric_positive_definite(a.Q) || !synthesis::is_symmetric_positive_definite(a.R)) {
    fail("Q and R symmetric positive definite");
  }

  const rpi::ErrorSystem err = artifact_error_system(a, lp);
  if (!a.tube.set.origin_in_interior()) fail("tube contains the origin in its interior");
  const auto report = rpi::verify_rpi(a.tube.set, err, verify_tolerance(a.tube.set), lp);
  if (!report.invariant) fail("tube is robustly invariant (violation " + std::to_string(report.invariance_violation) + ")");
  if (!report.admissible) fail("tube is constraint admissible");

  if (!a.Zbar.origin_in_interior() || !a.Ubar.origin_in_interior()) fail("tightened sets contain the origin");
  if (!geometry::is_subset(a.Zbar, a.plant.Z, verify_tolerance(a.plant.Z), lp)) fail("Z̄ ⊆ Z");
  if (!geometry::is_subset(a.Ubar, a.plant.U, verify_tolerance(a.plant.U), lp)) fail("Ū ⊆ U");

  if (a.XN.dim() != s.n()) fail("X_N lives in the state space");
  if (!a.XN.contains(VectorXd::Zero(s.n()))) fail("X_N contains the origin");
  const MatrixXd A_Kf = s.A + s.B * a.gains.Kf;
  const double tol = verify_tolerance(a.XN);
  if (!geometry::is_subset(MappedSet(A_Kf, a.XN), a.XN, tol, lp)) fail("A_Kf X_N ⊆ X_N");
  if (!geometry::is_subset(MappedSet(s.H, a.XN), a.Zbar, tol, lp)) fail("H X_N ⊆ Z̄");
  if (!geometry::is_subset(MappedSet(a.gains.Kf, a.XN), a.Ubar, tol, lp)) fail("K_f X_N ⊆ Ū");
}

solver::QpProblem build_qp(const ControllerArtifact& a, const VectorXd& xbar) {
  const auto& s = a.plant.sys;
  const int n = s.n(), m = s.m(), N = a.N;
  if (xbar.size() != n) throw Error(ErrorKind::kDimension, "build_qp: state dimension mismatch");
  const int nx = n * (N + 1);
  const int nv = nx + m * N;
  auto xi = [&](int i) { return i * n; };
  auto ui = [&](int i) { return nx + i * m; };

  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> cost;
  auto add_block = [](std::vector<Triplet>& t, int r0, int c0, const MatrixXd& blk, double scale) {
    for (int i = 0; i < blk.rows(); ++i) {
      for (int j = 0; j < blk.cols(); ++j) {
        if (blk(i, j) != 0.0) t.emplace_back(r0 + i, c0 + j, scale * blk(i, j));
      }
    }
  };
  // ½zᵀPz with doubled weights so the QP objective equals the MPC cost.
  for (int i = 0; i < N; ++i) {
    add_block(cost, xi(i), xi(i), a.Q, 2.0);
    add_block(cost, ui(i), ui(i), a.R, 2.0);
  }
  add_block(cost, xi(N), xi(N), a.gains.P, 2.0);

  std::vector<Triplet> eq;
  VectorXd beq = VectorXd::Zero(n * (N + 1));
  add_block(eq, 0, xi(0), MatrixXd::Identity(n, n), 1.0);
  beq.head(n) = xbar;
  for (int i = 0; i < N; ++i) {
    const int r = n * (i + 1);
    add_block(eq, r, xi(i + 1), MatrixXd::Identity(n, n), 1.0);
    add_block(eq, r, xi(i), s.A, -1.0);
    add_block(eq, r, ui(i), s.B, -1.0);
  }

  const MatrixXd Gz = a.Zbar.H() * s.H;
  const int rz = a.Zbar.rows(), ru = a.Ubar.rows(), rt = a.XN.rows();
  std::vector<Triplet> in;
  VectorXd bin(N * (rz + ru) + rt);
  int row = 0;
  for (int i = 0; i < N; ++i) {
    add_block(in, row, xi(i), Gz, 1.0);
    bin.segment(row, rz) = a.Zbar.b();
    row += rz;
    add_block(in, row, ui(i), a.Ubar.H(), 1.0);
    bin.segment(row, ru) = a.Ubar.b();
    row += ru;
  }
  add_block(in, row, xi(N), a.XN.H(), 1.0);
  bin.segment(row, rt) = a.XN.b();

  solver::QpProblem qp;
  qp.P.resize(nv, nv);
  qp.P.setFromTriplets(cost.begin(), cost.end());
  qp.q = VectorXd::Zero(nv);
  qp.A_eq.resize(beq.size(), nv);
  qp.A_eq.setFromTriplets(eq.begin(), eq.end());
  qp.b_eq = std::move(beq);
  qp.A_ineq.resize(bin.size(), nv);
  qp.A_ineq.setFromTriplets(in.begin(), in.end());
  qp.b_ineq = std::move(bin);
  return qp;
}

MpcSolution solve_mpc(const ControllerArtifact& a, const VectorXd& xbar, const solver::QpSolver& qp) {
  const auto& s = a.plant.sys;
  const int n = s.n(), m = s.m(), N = a.N;
  const auto r = qp.solve_qp(build_qp(a, xbar));
  MpcSolution out;
  out.status = r.status;
  out.detail = r.detail;
  if (!r.optimal()) return out;
  out.cost = r.objective;
  for (int i = 0; i <= N; ++i) out.x.push_back(r.x.segment(i * n, n));
  for (int i = 0; i < N; ++i) out.u.push_back(r.x.segment(n * (N + 1) + i * m, m));
  return out;
}

VectorXd control_law(const VectorXd& ubar, const VectorXd& xbar, const VectorXd& xhat, const MatrixXd& K) {
  if (K.rows() != ubar.size() || K.cols() != xbar.size() || xhat.size() != xbar.size()) {
    throw Error(ErrorKind::kDimension, "control_law: dimension mismatch");
  }
  return ubar + K * (xhat - xbar);
}

VectorXd observer_update(const synthesis::LtiSystem& sys, const synthesis::GainSet& gains, const VectorXd& xhat,
                         const VectorXd& u, const VectorXd& y) {
  return sys.A * xhat + sys.B * u + gains.L * (y - sys.C * xhat);
}

VectorXd nominal_update(const synthesis::LtiSystem& sys, const VectorXd& xbar, const VectorXd& ubar) {
  return sys.A * xbar + sys.B * ubar;
}

}  // namespace tubempc::mpc
