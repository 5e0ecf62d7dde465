// Acceptance checks, one line per criterion. Exits non-zero if any fails.
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tubempc/log.hpp"
#include "tubempc/problem.hpp"
#include "tubempc/rpi.hpp"
#include "tubempc/simulator.hpp"
#include "tubempc/synthesis.hpp"
#include "tubempc/tube_mpc.hpp"

using namespace tubempc;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using geometry::HPolytope;

namespace {

const std::filesystem::path kProblems = TUBEMPC_PROBLEMS_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && s > budget_s) {
    o.pass = false;
    o.detail += "; over the " + std::to_string(static_cast<int>(budget_s)) + " s budget";
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d: %s  %s (%s; %.2f s)\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(), s);
  std::fflush(stdout);
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

HPolytope interval(double r) { return HPolytope::symmetric_box(VectorXd::Constant(1, r)); }

double upper(const HPolytope& P) { return geometry::support_value(P, VectorXd::Ones(1)); }
double lower(const HPolytope& P) { return -geometry::support_value(P, -VectorXd::Ones(1)); }

// Schur-stable observable error systems with n_e in {2..6}, box Δ and Φ.
std::vector<rpi::ErrorSystem> random_corpus(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<rpi::ErrorSystem> out;
  while (static_cast<int>(out.size()) < count) {
    const int n = 2 + static_cast<int>(out.size()) % 5;
    const int o = 1 + static_cast<int>(rng() % n);
    MatrixXd A = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    const MatrixXd E = MatrixXd::NullaryExpr(o, n, [&] { return g(rng); });
    const double rho = synthesis::spectral_radius(A);
    if (rho < 1e-6) continue;
    A *= (0.3 + 0.65 * u(rng)) / rho;
    if (!synthesis::pbh_observable(A, E, 1e-3)) continue;
    const VectorXd dw = VectorXd::NullaryExpr(n, [&] { return 0.1 * u(rng); });
    const VectorXd pw = VectorXd::NullaryExpr(o, [&] { return 100.0 * u(rng); });
    out.emplace_back(A, HPolytope::symmetric_box(dw), E, HPolytope::symmetric_box(pw));
  }
  return out;
}

struct Demo {
  io::ProblemFile problem;
  mpc::ControllerArtifact artifact;
};

Demo load_demo(const char* name) {
  auto pf = io::load_problem(kProblems / name);
  auto a = mpc::synthesize(*pf.plant, pf.synthesis);
  return {std::move(pf), std::move(a)};
}

std::string csv_of(const sim::TrajectoryLog& log) {
  std::ostringstream s;
  sim::write_csv(s, log);
  return s.str();
}

}  // namespace

int main() {
  tubempc::log::set_level(tubempc::log::Level::kQuiet);

  criterion(1, "scalar mRPI oracle", 1.0, [] {
    double worst = 0.0;
    for (int i = 1; i <= 9; ++i) {
      const double a = 0.1 * i, r = 1.0 / (1.0 - a);
      const rpi::ErrorSystem sys(scalar(a), interval(1.0), scalar(1.0), interval(1000.0));
      for (int k = 1; k <= 5; ++k) {
        const auto res = rpi::compute_rpi(sys, k);
        worst = std::max({worst, std::abs(upper(res.set) - r), std::abs(lower(res.set) + r)});
      }
    }
    return Outcome{worst <= 1e-6, "a = 0.1..0.9, k = 1..5, max error " + num(worst)};
  });

  criterion(2, "scalar SDT chain at eps = 0.1", 1.0, [] {
    const rpi::ErrorSystem sys(scalar(0.5), interval(1.0), scalar(1.0), interval(100.0));
    const int kstar = rpi::sdt_kstar(sys, 0.1);
    const HPolytope container = rpi::sdt_container(sys, 0.1, kstar);
    const auto sdt = rpi::sdt_recursion(sys, 0.1);
    const auto R = rpi::compute_rpi(sys, sdt.kbar);
    const bool nested = geometry::is_subset(R.set, sdt.set, 1e-9);
    const double delta = 100.0 * (upper(sdt.set) - upper(R.set)) / upper(R.set);
    const double delta_lo = 100.0 * (lower(R.set) - lower(sdt.set)) / -lower(R.set);
    const bool ok = kstar == 4 && std::abs(upper(container) - 2.0625) < 1e-9 && sdt.kbar == 1 &&
                    std::abs(upper(sdt.set) - 2.0625) < 1e-9 && std::abs(lower(sdt.set) + 2.0625) < 1e-9 &&
                    nested && std::abs(delta - 3.125) <= 0.01 && std::abs(delta_lo - 3.125) <= 0.01;
    return Outcome{ok, "k* = " + std::to_string(kstar) + ", b_c = " + num(upper(container)) +
                           ", k_bar = " + std::to_string(sdt.kbar) + ", P_inf = [" + num(lower(sdt.set)) + ", " +
                           num(upper(sdt.set)) + "], nested = " + (nested ? "yes" : "no") + ", delta = " +
                           num(delta) + "% / " + num(delta_lo) + "%"};
  });

  const auto corpus = random_corpus(100, 2718);
  std::vector<int> kmin(corpus.size(), -1);
  std::vector<rpi::RpiResult> first;

  // Criterion 4 runs first because criterion 3 starts from its thresholds.
  Outcome existence;
  {
    const auto t0 = std::chrono::steady_clock::now();
    int bad = 0, max_k = 0;
    double worst_inv = -1e300, worst_adm = -1e300;
    std::string first_bad;
    for (size_t i = 0; i < corpus.size(); ++i) {
      try {
        auto r = rpi::find_min_k(corpus[i], 1000);
        const auto v = rpi::verify_rpi(r.set, corpus[i], 1e-9);
        worst_inv = std::max(worst_inv, v.invariance_violation);
        worst_adm = std::max(worst_adm, v.admissibility_violation);
        if (!v.invariant || !v.admissible || r.k > 1000) {
          ++bad;
          if (first_bad.empty()) first_bad = "instance " + std::to_string(i);
        }
        kmin[i] = r.k;
        max_k = std::max(max_k, r.k);
        first.push_back(std::move(r));
      } catch (const Error& e) {
        ++bad;
        if (first_bad.empty()) first_bad = "instance " + std::to_string(i) + ": " + e.what();
        first.push_back(rpi::RpiResult{interval(1.0), -1, rpi::Method::kAlgorithm1, {}});
      }
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    existence = {bad == 0, std::to_string(corpus.size() - bad) + "/100 instances, max k_min = " +
                               std::to_string(max_k) + ", worst invariance slack " + num(-worst_inv) +
                               ", worst admissibility slack " + num(-worst_adm) +
                               (first_bad.empty() ? "" : ", first failure " + first_bad) + ", search " +
                               num(s) + " s"};
  }

  criterion(3, "nested generations on 100 random error systems", 300.0, [&] {
    int bad = 0, checked = 0;
    std::string first_bad;
    for (size_t i = 0; i < corpus.size(); ++i) {
      if (kmin[i] < 0) {
        ++bad;
        continue;
      }
      rpi::RpiResult prev = first[i];
      for (int k = kmin[i]; k < kmin[i] + 6; ++k) {
        auto next = rpi::compute_rpi(corpus[i], k + 1);
        ++checked;
        if (!geometry::is_subset(next.set, prev.set, 1e-7)) {
          ++bad;
          if (first_bad.empty()) first_bad = "instance " + std::to_string(i) + " at k = " + std::to_string(k);
          break;
        }
        prev = std::move(next);
      }
    }
    return Outcome{bad == 0, std::to_string(checked) + " inclusions R(k+1) in R(k) checked from k_min, " +
                                 std::to_string(bad) + " failing instances" +
                                 (first_bad.empty() ? "" : ", first " + first_bad)};
  });

  criterion(4, "finite-k existence with verified invariance", 0.0, [&] { return existence; });

  criterion(5, "R(k_bar) inside P_inf on the 2-D surrogates", 60.0, [] {
    std::vector<std::pair<std::string, rpi::ErrorSystem>> systems;
    const auto di = io::load_problem(kProblems / "double_integrator.json");
    const auto gains = mpc::design_gains(*di.plant, di.synthesis);
    const auto coupled = mpc::build_error_system(*di.plant, gains.K, gains.L);
    systems.emplace_back("double integrator (box delta)",
                         rpi::ErrorSystem(coupled.A_e,
                                          mpc::concretize_delta(coupled.delta, mpc::DeltaMode::kBox, di.synthesis.eta),
                                          coupled.E, coupled.phi));
    systems.emplace_back("2-D demo", *io::load_problem(kProblems / "rpi_demo_2d.json").error_system);
    std::string detail;
    bool ok = true;
    for (const auto& [name, sys] : systems) {
      detail += (detail.empty() ? "" : "; ") + name + ":";
      for (double eps : {0.01, 0.1, 0.5}) {
        const auto sdt = rpi::sdt_recursion(sys, eps);
        auto r = rpi::try_compute_rpi(sys, sdt.kbar);
        if (!r) r = rpi::find_min_k(sys, 1000, {}, solver::default_lp_solver(), sdt.kbar);
        const bool nested = geometry::is_subset(r->set, sdt.set, 1e-7);
        ok &= nested;
        detail += " eps " + num(eps) + " k_bar " + std::to_string(sdt.kbar) + (nested ? " ok" : " NOT NESTED");
      }
    }
    return Outcome{ok, detail};
  });

  const Demo di = load_demo("double_integrator.json");
  std::vector<sim::AuditReport> audits;
  criterion(6, "500 closed-loop runs, N = 13, 50 steps", 300.0, [&] {
    int constraint = 0, exits = 0, qp = 0, failed = 0;
    const auto& cfg0 = di.problem.simulation;
    for (std::uint64_t i = 0; i < 500; ++i) {
      sim::SimConfig cfg = cfg0;
      cfg.steps = 50;
      cfg.seed = sim::run_seed(cfg0.seed, i);
      try {
        const auto log = sim::run_closed_loop(di.artifact, cfg);
        auto report = sim::audit(log, di.artifact);
        constraint += report.constraint_violations;
        exits += report.tube_exits;
        qp += report.qp_failures;
        if (log.steps.size() != 50) ++failed;
        audits.push_back(std::move(report));
      } catch (const Error&) {
        ++failed;
      }
    }
    const bool ok = di.artifact.N == 13 && constraint == 0 && exits == 0 && qp == 0 && failed == 0;
    return Outcome{ok, "constraint violations " + std::to_string(constraint) + ", tube exits " +
                           std::to_string(exits) + ", non-optimal QPs " + std::to_string(qp) + ", failed runs " +
                           std::to_string(failed)};
  });

  criterion(7, "geometric decay of the distance to [I I]R", 0.0, [&] {
    int good = 0, unfitted = 0, low_r2 = 0, slow = 0;
    double min_r2 = 1.0, max_rate = 0.0;
    for (const auto& a : audits) {
      const auto& d = a.decay;
      if (!d.fitted) {
        ++unfitted;
        continue;
      }
      min_r2 = std::min(min_r2, d.r_squared);
      max_rate = std::max(max_rate, d.rate);
      if (d.rate >= 1.0) ++slow;
      if (d.r_squared < 0.9) ++low_r2;
      if (d.rate < 1.0 && d.r_squared >= 0.9) ++good;
    }
    const bool ok = audits.size() == 500 && good == 500;
    return Outcome{ok, std::to_string(good) + "/" + std::to_string(audits.size()) + " runs fit with rate < 1 and R^2 >= 0.9; " +
                           std::to_string(low_r2) + " with R^2 < 0.9, " + std::to_string(slow) + " with rate >= 1, " +
                           std::to_string(unfitted) + " unfittable; max rate " + num(max_rate) + ", min R^2 " +
                           num(min_r2)};
  });

  criterion(8, "unconstrained MPC input equals K_f x", 0.0, [&] {
    const auto& a = di.artifact;
    const int n = a.plant.sys.n();
    VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      hi[i] = geometry::support_value(a.XN, VectorXd::Unit(n, i));
      lo[i] = -geometry::support_value(a.XN, -VectorXd::Unit(n, i));
    }
    sim::Rng rng(8);
    int tried = 0;
    double worst = 0.0;
    bool all_optimal = true;
    for (int accepted = 0; accepted < 100;) {
      VectorXd x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(lo[i], hi[i]);
      ++tried;
      // Interior of X_N: the LQR trajectory from there never touches a constraint.
      if (!a.XN.contains(x / 0.98, 0.0)) continue;
      ++accepted;
      const auto sol = mpc::solve_mpc(a, x);
      all_optimal &= sol.optimal();
      if (sol.optimal()) worst = std::max(worst, (sol.u.front() - a.gains.Kf * x).lpNorm<Eigen::Infinity>());
    }
    return Outcome{all_optimal && worst <= 1e-6, "100 states in X_N (" + std::to_string(tried) +
                                                     " drawn), max |u_0 - K_f x| = " + num(worst)};
  });

  criterion(9, "DARE residual and scalar golden ratio", 0.0, [] {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    auto gauss = [&](int r, int c) { return MatrixXd(MatrixXd::NullaryExpr(r, c, [&] { return g(rng); })); };
    double worst = 0.0;
    int solved = 0, drawn = 0;
    while (solved < 100) {
      const int n = 1 + solved % 10, m = 1 + solved % 3;
      const MatrixXd A = gauss(n, n) / std::sqrt(static_cast<double>(n));
      const MatrixXd B = gauss(n, m);
      ++drawn;
      if (!synthesis::pbh_controllable(A, B, 1e-2)) continue;
      const MatrixXd G = gauss(n, n);
      const MatrixXd Q = G * G.transpose() + 0.1 * MatrixXd::Identity(n, n);
      const MatrixXd R = MatrixXd::Identity(m, m);
      const MatrixXd P = synthesis::solve_dare(A, B, Q, R);
      worst = std::max(worst, synthesis::dare_residual(A, B, Q, R, P));
      ++solved;
    }
    const double p = synthesis::solve_dare(scalar(1), scalar(1), scalar(1), scalar(1))(0, 0);
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    return Outcome{worst <= 1e-9 && std::abs(p - golden) <= 1e-10,
                   "100 systems (n <= 10, " + std::to_string(drawn) + " drawn), max residual " + num(worst) +
                       ", scalar P - golden ratio = " + num(p - golden)};
  });

  criterion(10, "n = 10 surrogate: synthesis < 60 s, QP < 50 ms", 0.0, [] {
    const auto pf = io::load_problem(kProblems / "surrogate_n10.json");
    auto cfg = pf.synthesis;
    cfg.delta_mode = mpc::DeltaMode::kExact;
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = mpc::synthesize(*pf.plant, cfg);
    const double synth_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    sim::SimConfig sc = pf.simulation;
    sc.steps = 50;
    const auto log = sim::run_closed_loop(a, sc);
    double worst_ms = 0.0, total_ms = 0.0;
    bool optimal = true;
    for (const auto& st : log.steps) {
      const auto q0 = std::chrono::steady_clock::now();
      const auto sol = mpc::solve_mpc(a, st.xbar);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - q0).count();
      optimal &= sol.optimal();
      worst_ms = std::max(worst_ms, ms);
      total_ms += ms;
    }
    const bool ok = a.N == 13 && synth_s < 60.0 && worst_ms < 50.0 && optimal;
    return Outcome{ok, "synthesis " + num(synth_s) + " s (k = " + std::to_string(a.tube.k) + ", " +
                           std::to_string(a.tube.set.rows()) + " tube rows), QP max " + num(worst_ms) + " ms, mean " +
                           num(total_ms / static_cast<double>(log.steps.size())) + " ms over " +
                           std::to_string(log.steps.size()) + " steps"};
  });

  criterion(11, "bit-identical logs for fixed seeds", 0.0, [&] {
    // A second synthesis from the same file, so the whole pipeline is covered.
    const Demo again = load_demo("double_integrator.json");
    int identical = 0;
    for (std::uint64_t i = 0; i < 5; ++i) {
      sim::SimConfig cfg = di.problem.simulation;
      cfg.seed = sim::run_seed(cfg.seed, i);
      const solver::InteriorPointSolver fresh;
      const std::string a = csv_of(sim::run_closed_loop(di.artifact, cfg));
      const std::string b = csv_of(sim::run_closed_loop(again.artifact, cfg, fresh));
      identical += a == b;
    }
    return Outcome{identical == 5, std::to_string(identical) + "/5 seeds give byte-identical CSV across two syntheses"};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
