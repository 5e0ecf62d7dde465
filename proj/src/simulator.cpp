#include "tubempc/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace tubempc::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::HPolytope;

std::uint64_t run_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string_view to_string(DisturbanceMode mode) { return mode == DisturbanceMode::kUniform ? "uniform" : "zero"; }

DisturbanceMode disturbance_mode_from_string(std::string_view name) {
  if (name == "uniform") return DisturbanceMode::kUniform;
  if (name == "zero") return DisturbanceMode::kZero;
  throw Error(ErrorKind::kValidation, "unknown disturbance mode '" + std::string(name) + "' (expected uniform or zero)");
}

void SimConfig::validate(int n) const {
  if (steps < 1) throw Error(ErrorKind::kValidation, "simulation steps must be at least 1");
  if (x0) {
    if (x0->size() != n) throw Error(ErrorKind::kDimension, "x0 must have n entries");
  } else {
    if (x0_lower.size() != n || x0_upper.size() != n) {
      throw Error(ErrorKind::kValidation, "give either x0 or an x0 box with n-dimensional bounds");
    }
    if ((x0_lower.array() > x0_upper.array()).any()) throw Error(ErrorKind::kValidation, "x0 box has lower > upper");
  }
  if (initial_error.size() != 0 && initial_error.size() != n) {
    throw Error(ErrorKind::kDimension, "initial_error must have n entries");
  }
  if ((initial_error.array() < 0.0).any()) throw Error(ErrorKind::kValidation, "initial_error half-widths must be ≥ 0");
  if (!(disturbance_scale >= 0.0)) throw Error(ErrorKind::kValidation, "disturbance_scale must be ≥ 0");
}

VectorXd sample_disturbance(const HPolytope& set, Rng& rng) {
  const auto box = set.as_box();
  if (!box) throw Error(ErrorKind::kNonBoxSet, "sampling needs an axis-aligned box; got a general polytope");
  VectorXd out(set.dim());
  for (int i = 0; i < set.dim(); ++i) out[i] = rng.uniform(box->first[i], box->second[i]);
  return out;
}

namespace {

VectorXd stack(const VectorXd& a, const VectorXd& b) {
  VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

// ξ_0 ∈ R is what the guarantees need; with d_0 = 0 that is the initial
// error box times {0}.
void check_initial_error_box(const mpc::ControllerArtifact& a, const VectorXd& half_widths) {
  const int n = a.plant.sys.n();
  MatrixXd embed = MatrixXd::Zero(2 * n, n);
  embed.topRows(n).setIdentity();
  const geometry::MappedSet box(embed, HPolytope::symmetric_box(half_widths));
  if (!geometry::is_subset(box, a.tube.set, 1e-12)) {
    throw Error(ErrorKind::kValidation, "initial_error box is not contained in the estimation-error section of the tube");
  }
}

}  // namespace

TrajectoryLog run_closed_loop(const mpc::ControllerArtifact& a, const SimConfig& cfg, const solver::QpSolver& qp) {
  const auto& s = a.plant.sys;
  const int n = s.n();
  cfg.validate(n);
  if (cfg.initial_error.size() > 0 && cfg.initial_error.maxCoeff() > 0.0) check_initial_error_box(a, cfg.initial_error);

  Rng rng(cfg.seed);
  VectorXd xhat = cfg.x0 ? *cfg.x0 : VectorXd(n);
  if (!cfg.x0) {
    for (int i = 0; i < n; ++i) xhat[i] = rng.uniform(cfg.x0_lower[i], cfg.x0_upper[i]);
  }
  VectorXd x = xhat;
  for (int i = 0; i < cfg.initial_error.size(); ++i) {
    x[i] += rng.uniform(-cfg.initial_error[i], cfg.initial_error[i]);
  }
  auto state = mpc::ControllerState::start(xhat);

  TrajectoryLog log;
  for (int k = 0; k < cfg.steps; ++k) {
    StepRecord rec;
    rec.k = k;
    rec.x = x;
    rec.xhat = state.xhat;
    rec.xbar = state.xbar;
    rec.xi = stack(x - state.xhat, state.xhat - state.xbar);
    rec.z = s.H * x;

    if (!a.tube.set.contains(rec.xi, 1e-9) && cfg.strict) {
      throw Error(ErrorKind::kInvariantViolation, "ξ left the tube at step " + std::to_string(k));
    }

    const mpc::MpcSolution sol = mpc::solve_mpc(a, state.xbar, qp);
    rec.qp_status = sol.status;
    if (!sol.optimal()) {
      const std::string what = k == 0 ? "MPC problem infeasible from this start"
                                      : "MPC QP failed at step " + std::to_string(k) + " (" +
                                            std::string(solver::to_string(sol.status)) + ")";
      if (cfg.strict) throw Error(k == 0 ? ErrorKind::kInfeasible : ErrorKind::kInvariantViolation, what);
      rec.u = VectorXd::Zero(s.m());
      rec.ubar = VectorXd::Zero(s.m());
      rec.w = VectorXd::Zero(n);
      rec.v = VectorXd::Zero(s.p());
      rec.stage_cost = x.dot(a.Q * x);
      log.steps.push_back(std::move(rec));
      log.completed = false;
      log.note = what;
      break;
    }
    rec.ubar = sol.u.front();
    rec.u = mpc::control_law(rec.ubar, state.xbar, state.xhat, a.gains.K);

    if (cfg.disturbance == DisturbanceMode::kUniform) {
      rec.w = cfg.disturbance_scale * sample_disturbance(a.plant.W, rng);
      rec.v = cfg.disturbance_scale * sample_disturbance(a.plant.V, rng);
    } else {
      rec.w = VectorXd::Zero(n);
      rec.v = VectorXd::Zero(s.p());
    }
    const VectorXd y = s.C * x + rec.v;
    rec.stage_cost = x.dot(a.Q * x) + rec.u.dot(a.R * rec.u);

    x = s.A * x + s.B * rec.u + rec.w;
    state.xhat = mpc::observer_update(s, a.gains, state.xhat, rec.u, y);
    state.xbar = mpc::nominal_update(s, state.xbar, rec.ubar);
    ++state.k;
    log.steps.push_back(std::move(rec));
  }
  log.x_final = x;
  log.xhat_final = state.xhat;
  log.xbar_final = state.xbar;
  return log;
}

DecayFit fit_geometric_decay(const std::vector<double>& distance, double threshold) {
  std::vector<double> ks, ys;
  for (size_t k = 0; k < distance.size(); ++k) {
    if (distance[k] > threshold) {
      ks.push_back(static_cast<double>(k));
      ys.push_back(std::log(distance[k]));
    }
  }
  DecayFit fit;
  fit.points = static_cast<int>(ks.size());
  if (ks.size() < 3) return fit;
  const double nk = static_cast<double>(ks.size());
  double mk = 0, my = 0;
  for (size_t i = 0; i < ks.size(); ++i) {
    mk += ks[i] / nk;
    my += ys[i] / nk;
  }
  double skk = 0, sky = 0, syy = 0;
  for (size_t i = 0; i < ks.size(); ++i) {
    skk += (ks[i] - mk) * (ks[i] - mk);
    sky += (ks[i] - mk) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sky / skk;
  const double intercept = my - slope * mk;
  double ss_res = 0;
  for (size_t i = 0; i < ks.size(); ++i) {
    const double r = ys[i] - (intercept + slope * ks[i]);
    ss_res += r * r;
  }
  fit.fitted = true;
  fit.rate = std::exp(slope);
  fit.scale = std::exp(intercept);
  fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

double distance_to_tube(const VectorXd& x, const HPolytope& R, const solver::LpSolver& lp) {
  const int n = static_cast<int>(x.size());
  if (R.dim() != 2 * n) throw Error(ErrorKind::kDimension, "distance_to_tube: tube must be 2n-dimensional");
  // min t  s.t.  |x - [I I]ξ|_∞ ≤ t,  H_R ξ ≤ b_R
  const int nv = 2 * n + 1;
  MatrixXd G = MatrixXd::Zero(2 * n + R.rows(), nv);
  VectorXd h(2 * n + R.rows());
  for (int i = 0; i < n; ++i) {
    G(i, i) = -1.0;
    G(i, n + i) = -1.0;
    G(i, 2 * n) = -1.0;
    h[i] = -x[i];
    G(n + i, i) = 1.0;
    G(n + i, n + i) = 1.0;
    G(n + i, 2 * n) = -1.0;
    h[n + i] = x[i];
  }
  G.bottomLeftCorner(R.rows(), 2 * n) = R.H();
  h.tail(R.rows()) = R.b();
  solver::LpProblem p;
  p.sense = solver::Sense::kMinimize;
  p.objective = VectorXd::Unit(nv, 2 * n);
  p.A_ineq = solver::to_sparse(G);
  p.b_ineq = h;
  const auto r = lp.solve_lp(p);
  if (!r.optimal()) throw Error(ErrorKind::kSolverFailure, "distance LP failed: " + r.detail);
  return std::max(0.0, r.objective);
}

AuditReport audit(const TrajectoryLog& log, const mpc::ControllerArtifact& a, double tol, const solver::LpSolver& lp) {
  AuditReport report;
  for (const auto& st : log.steps) {
    const std::string at = "step " + std::to_string(st.k) + ": ";
    if (st.qp_status != solver::SolveStatus::kOptimal) {
      ++report.qp_failures;
      report.violations.push_back(at + "QP " + std::string(solver::to_string(st.qp_status)));
    }
    if (!a.plant.Z.contains(st.z, tol)) {
      ++report.constraint_violations;
      report.violations.push_back(at + "z outside Z");
    }
    if (st.qp_status == solver::SolveStatus::kOptimal && !a.plant.U.contains(st.u, tol)) {
      ++report.constraint_violations;
      report.violations.push_back(at + "u outside U");
    }
    if (!a.tube.set.contains(st.xi, tol)) {
      ++report.tube_exits;
      report.violations.push_back(at + "ξ outside the tube");
    }
    report.cost += st.stage_cost;
    report.distance.push_back(distance_to_tube(st.x, a.tube.set, lp));
  }
  report.decay = fit_geometric_decay(report.distance);
  return report;
}

std::pair<GridAxis, GridAxis> parse_grid(const std::string& spec) {
  auto axis = [&](const std::string& part) {
    GridAxis g;
    char extra = 0;
    if (std::sscanf(part.c_str(), "%lf:%lf:%d%c", &g.lo, &g.hi, &g.count, &extra) != 3 || g.count < 1 ||
        !std::isfinite(g.lo) || !std::isfinite(g.hi) || g.lo > g.hi) {
      throw Error(ErrorKind::kValidation, "bad grid axis '" + part + "' (expected min:max:count with min ≤ max, count ≥ 1)");
    }
    return g;
  };
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw Error(ErrorKind::kValidation, "grid needs two axes: x1min:x1max:n1,x2min:x2max:n2");
  return {axis(spec.substr(0, comma)), axis(spec.substr(comma + 1))};
}

std::vector<FeasiblePoint> feasible_region_scan(const mpc::ControllerArtifact& a, const GridAxis& a1,
                                                const GridAxis& a2, const solver::QpSolver& qp) {
  const int n = a.plant.sys.n();
  auto value = [](const GridAxis& g, int i) {
    return g.count == 1 ? g.lo : g.lo + (g.hi - g.lo) * static_cast<double>(i) / (g.count - 1);
  };
  std::vector<FeasiblePoint> out;
  out.reserve(static_cast<size_t>(a1.count) * a2.count);
  for (int i = 0; i < a1.count; ++i) {
    for (int j = 0; j < a2.count; ++j) {
      VectorXd x0 = VectorXd::Zero(n);
      x0[0] = value(a1, i);
      if (n > 1) x0[1] = value(a2, j);
      FeasiblePoint pt{x0[0], n > 1 ? x0[1] : value(a2, j), false};
      const auto sol = mpc::solve_mpc(a, x0, qp);
      if (sol.status == solver::SolveStatus::kNumericalFailure) {
        throw Error(ErrorKind::kSolverFailure, "feasibility QP failed: " + sol.detail);
      }
      pt.feasible = sol.optimal();
      out.push_back(pt);
    }
  }
  return out;
}

namespace {

void header(std::ostream& out, const char* name, long size) {
  for (long i = 0; i < size; ++i) out << ',' << name << '_' << i;
}

void values(std::ostream& out, const VectorXd& v, long size) {
  char buf[40];
  for (long i = 0; i < size; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", i < v.size() ? v[i] : 0.0);
    out << ',' << buf;
  }
}

}  // namespace

void write_csv(std::ostream& out, const TrajectoryLog& log) {
  if (log.steps.empty()) return;
  const auto& f = log.steps.front();
  const long n = f.x.size(), m = f.u.size(), o = f.z.size(), p = f.v.size();
  out << 'k';
  header(out, "x", n);
  header(out, "xhat", n);
  header(out, "xbar", n);
  header(out, "u", m);
  header(out, "ubar", m);
  header(out, "z", o);
  header(out, "w", n);
  header(out, "v", p);
  header(out, "xi", 2 * n);
  out << ",qp_status,stage_cost\n";
  char buf[40];
  for (const auto& st : log.steps) {
    out << st.k;
    values(out, st.x, n);
    values(out, st.xhat, n);
    values(out, st.xbar, n);
    values(out, st.u, m);
    values(out, st.ubar, m);
    values(out, st.z, o);
    values(out, st.w, n);
    values(out, st.v, p);
    values(out, st.xi, 2 * n);
    std::snprintf(buf, sizeof buf, "%.17g", st.stage_cost);
    out << ',' << solver::to_string(st.qp_status) << ',' << buf << '\n';
  }
}

void write_feasible_csv(std::ostream& out, const std::vector<FeasiblePoint>& points) {
  out << "x1,x2,feasible\n";
  char buf[80];
  for (const auto& pt : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", pt.x1, pt.x2, pt.feasible ? 1 : 0);
    out << buf;
  }
}

}  // namespace tubempc::sim
