#include "tubempc/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "tubempc/json_io.hpp"
#include "tubempc/log.hpp"
#include "tubempc/problem.hpp"
#include "tubempc/rpi.hpp"
#include "tubempc/simulator.hpp"
#include "tubempc/tube_mpc.hpp"

namespace tubempc::cli {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string fmt_fixed(double v, int decimals) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(decimals) << v;
  return s.str();
}

// Problem-file and argument errors exit with 1; anything that escapes a
// numerical stage exits with 2 and names it.
int report_error(const Error& e, Streams io, const char* fallback_stage) {
  const bool input_error = e.stage().empty() &&
                           (e.kind() == ErrorKind::kValidation || e.kind() == ErrorKind::kDimension);
  if (input_error) {
    io.err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  const std::string stage = e.stage().empty() ? fallback_stage : e.stage();
  io.err << "error [" << to_string(e.kind()) << "] in stage '" << stage << "': " << e.what() << '\n';
  return kExitSynthesis;
}

template <typename F>
int guarded(Streams io, const char* stage, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return report_error(e, io, stage);
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    io.err << "error in stage '" << stage << "': " << e.what() << '\n';
    return kExitSynthesis;
  }
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kValidation, "cannot write " + path.string());
  return out;
}

mpc::ControllerArtifact load_checked_artifact(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kValidation, "artifact not found: " + path.string());
  mpc::ControllerArtifact a = io::load_artifact(path);
  try {
    mpc::validate_artifact(a);
  } catch (const Error& e) {
    throw Error(ErrorKind::kValidation, path.string() + ": " + e.what());
  }
  return a;
}

void tightening_table(std::ostream& out, const char* name, const geometry::HPolytope& original,
                      const geometry::HPolytope& tightened) {
  out << name << " tightening\n";
  out << "  row      offset   tightened   reduction   percent\n";
  for (int i = 0; i < original.rows(); ++i) {
    const double b = original.b()[i], bt = tightened.b()[i];
    const double cut = b - bt;
    char line[128];
    std::snprintf(line, sizeof line, "  %3d  %10.6g  %10.6g  %10.4g  %7.3f%%\n", i, b, bt, cut, 100.0 * cut / b);
    out << line;
  }
}

}  // namespace

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::kValidation, "--eps: '" + item + "' is not a positive number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorKind::kValidation, "--eps: empty list");
  return out;
}

int cmd_synthesize(const fs::path& problem, const fs::path& out, Streams io) {
  return guarded(io, "synthesize", [&] {
    const io::ProblemFile pf = io::load_problem(problem);
    if (!pf.plant) throw Error(ErrorKind::kValidation, "problem: synthesis needs a 'plant' block");
    const auto t0 = std::chrono::steady_clock::now();
    const mpc::ControllerArtifact a = mpc::synthesize(*pf.plant, pf.synthesis);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::save_artifact(out, a);

    if (!io.quiet) {
      io.out << "synthesized " << (pf.name.empty() ? problem.filename().string() : pf.name) << " in "
             << fmt_fixed(seconds, 3) << " s\n";
      io.out << "tube: k=" << a.tube.k << ", " << a.tube.set.rows() << " rows, delta mode "
             << mpc::to_string(a.delta_mode) << "\n";
      io.out << "terminal set: " << a.XN.rows() << " rows\n";
    }
    tightening_table(io.out, "Z", a.plant.Z, a.Zbar);
    tightening_table(io.out, "U", a.plant.U, a.Ubar);
    if (!io.quiet) io.out << "artifact written to " << out.string() << "\n";
    return kExitOk;
  });
}

namespace {

// Error system used for set comparisons: the problem's own, or the coupled
// system of the plant with its designed gains. The comparison needs a
// halfspace form of Δ, so a Δ without one is replaced by its bounding box.
rpi::ErrorSystem comparison_system(const io::ProblemFile& pf, Streams io) {
  if (pf.error_system) {
    if (pf.error_system->delta_hpolytope()) return *pf.error_system;
    io.err << "note: Δ has no halfspace form; using its bounding box\n";
    const auto& e = *pf.error_system;
    return rpi::ErrorSystem(e.A_e, mpc::concretize_delta(e.delta, mpc::DeltaMode::kBox, pf.synthesis.eta), e.E,
                            e.phi);
  }
  if (!pf.plant) throw Error(ErrorKind::kValidation, "problem: needs a 'plant' or an 'error_system'");
  const auto gains = mpc::design_gains(*pf.plant, pf.synthesis);
  rpi::ErrorSystem coupled = mpc::build_error_system(*pf.plant, gains.K, gains.L);
  mpc::DeltaMode mode = pf.synthesis.delta_mode;
  if (mode == mpc::DeltaMode::kExact && !coupled.delta_hpolytope()) {
    io.err << "note: exact Δ has no halfspace form; using its bounding box\n";
    mode = mpc::DeltaMode::kBox;
  }
  if (mode == mpc::DeltaMode::kExact) return coupled;
  return rpi::ErrorSystem(coupled.A_e, mpc::concretize_delta(coupled.delta, mode, pf.synthesis.eta), coupled.E,
                          coupled.phi);
}

struct CompareLine {
  double eps;
  std::string method;
  int k, rows;
  double wall;
  int direction;
  double reference, offset;
};

}  // namespace

int cmd_rpi_compare(const fs::path& problem, const std::vector<double>& eps_override, const fs::path& out,
                    Streams io) {
  return guarded(io, "rpi_compare", [&] {
    const io::ProblemFile pf = io::load_problem(problem);
    const std::vector<double> eps = eps_override.empty() ? pf.eps : eps_override;
    const rpi::ErrorSystem sys = [&] {
      try {
        return comparison_system(pf, io);
      } catch (const Error& e) {
        if (!e.stage().empty()) throw;
        throw Error(e.kind(), std::string("error_system: ") + e.what(), "error_system");
      }
    }();
    const bool planar = sys.n() == 2;
    if (!planar) {
      io.err << "warning: polygon comparison skipped: the error system is " << sys.n() << "-dimensional, not 2-D\n";
    }

    std::vector<CompareLine> lines;
    if (!io.quiet) {
      io.out << "   eps  method        k  rows     time_s  max_delta_%  mean_delta_%\n";
    }
    for (double e : eps) {
      const rpi::SdtResult sdt = [&] {
        try {
          return rpi::sdt_recursion(sys, e);
        } catch (const Error& err) {
          throw Error(err.kind(), std::string("sdt: ") + err.what(), "sdt");
        }
      }();
      rpi::RpiResult alg1 = [&] {
        try {
          if (auto r = rpi::try_compute_rpi(sys, sdt.kbar)) return *r;
          io.err << "warning: no RPI set at k̄ = " << sdt.kbar << "; searching upward from k̄\n";
          return rpi::find_min_k(sys, std::max(pf.synthesis.k_max, sdt.kbar), {}, solver::default_lp_solver(),
                                 sdt.kbar);
        } catch (const Error& err) {
          throw Error(err.kind(), std::string("rpi: ") + err.what(), "rpi");
        }
      }();
      const auto& H = alg1.set.H();
      const auto& b = alg1.set.b();

      auto add_method = [&](const std::string& name, int k, int rows, double wall, auto offset_of) {
        double worst = -std::numeric_limits<double>::infinity(), sum = 0.0;
        for (int i = 0; i < H.rows(); ++i) {
          const double off = offset_of(i);
          lines.push_back({e, name, k, rows, wall, i, b[i], off});
          const double pct = 100.0 * (off - b[i]) / std::abs(b[i]);
          worst = std::max(worst, pct);
          sum += pct;
        }
        if (!io.quiet) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "%6g  %-11s %3d  %4d  %9.4f  %11.4f  %12.4f\n", e, name.c_str(), k, rows,
                        wall, worst, sum / static_cast<double>(H.rows()));
          io.out << buf;
        }
      };

      add_method("algorithm1", alg1.k, alg1.set.rows(), alg1.diagnostics.wall_time_s, [&](int i) { return b[i]; });
      add_method("sdt", sdt.kbar, sdt.set.rows(), sdt.wall_time_s,
                 [&](int i) { return geometry::support_value(sdt.set, H.row(i).transpose()); });
      if (planar) {
        const int r = std::max(3, alg1.set.rows());
        const rpi::RpiResult poly = [&] {
          try {
            return rpi::polygon_rpi(sys, r);
          } catch (const Error& err) {
            throw Error(err.kind(), std::string("polygon: ") + err.what(), "polygon");
          }
        }();
        add_method("polygon", r, poly.set.rows(), poly.diagnostics.wall_time_s,
                   [&](int i) { return geometry::support_value(poly.set, H.row(i).transpose()); });
      }
    }

    std::ofstream csv = open_output(out);
    csv << "eps,method,k,rows,wall_time_s,direction,reference_offset,offset,delta_abs,delta_pct\n";
    csv << std::setprecision(17);
    for (const auto& l : lines) {
      const double delta = l.offset - l.reference;
      csv << fmt(l.eps) << ',' << l.method << ',' << l.k << ',' << l.rows << ',' << l.wall << ',' << l.direction << ','
          << l.reference << ',' << l.offset << ',' << delta << ',' << 100.0 * delta / std::abs(l.reference) << '\n';
    }
    if (!csv) throw Error(ErrorKind::kValidation, "failed writing " + out.string());
    if (!io.quiet) io.out << "comparison written to " << out.string() << "\n";
    return kExitOk;
  });
}

namespace {

struct RunOutcome {
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  sim::AuditReport audit;
};

io::Json decay_json(const sim::DecayFit& d) {
  return io::Json{{"fitted", d.fitted}, {"rate", d.rate}, {"scale", d.scale}, {"r_squared", d.r_squared},
                  {"points", d.points}};
}

}  // namespace

int cmd_simulate(const fs::path& problem, const fs::path& artifact_path, std::optional<int> runs_override,
                 std::optional<std::uint64_t> seed_override, const fs::path& out_dir, Streams io, unsigned workers) {
  return guarded(io, "simulate", [&] {
    const io::ProblemFile pf = io::load_problem(problem);
    const mpc::ControllerArtifact a = load_checked_artifact(artifact_path);
    const int n = a.plant.sys.n();
    if (pf.plant && pf.plant->sys.n() != n) {
      throw Error(ErrorKind::kDimension, "artifact has n = " + std::to_string(n) + " but the problem has n = " +
                                             std::to_string(pf.plant->sys.n()));
    }
    sim::SimConfig base = pf.simulation;
    if (!pf.plant) base.x0 = VectorXd::Zero(n);
    const int runs = runs_override.value_or(pf.runs);
    if (runs < 1) throw Error(ErrorKind::kValidation, "--runs must be at least 1");
    const std::uint64_t seed = seed_override.value_or(base.seed);
    base.validate(n);
    fs::create_directories(out_dir);

    std::vector<RunOutcome> outcomes(static_cast<size_t>(runs));
    std::atomic<int> next{0};
    std::mutex progress_mutex;
    int done = 0;
    auto worker = [&] {
      // One solver instance per worker.
      const solver::InteriorPointSolver qp;
      const solver::AutoLpSolver lp;
      for (int i = next++; i < runs; i = next++) {
        RunOutcome& o = outcomes[static_cast<size_t>(i)];
        sim::SimConfig cfg = base;
        cfg.seed = o.seed = sim::run_seed(seed, static_cast<std::uint64_t>(i));
        try {
          const sim::TrajectoryLog log = sim::run_closed_loop(a, cfg, qp);
          char name[32];
          std::snprintf(name, sizeof name, "run_%04d.csv", i);
          std::ofstream csv(out_dir / name);
          if (!csv) throw Error(ErrorKind::kValidation, "cannot write " + (out_dir / name).string());
          sim::write_csv(csv, log);
          o.audit = sim::audit(log, a, 1e-9, lp);
          o.completed = log.completed;
          if (!log.completed) o.error = log.note;
        } catch (const Error& e) {
          o.error = std::string(to_string(e.kind())) + ": " + e.what();
        } catch (const std::exception& e) {
          o.error = e.what();
        }
        std::lock_guard lock(progress_mutex);
        ++done;
        if (!io.quiet && (done % 50 == 0 || done == runs)) io.err << "simulated " << done << "/" << runs << " runs\n";
      }
    };
    unsigned count = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
    count = std::min<unsigned>(count, static_cast<unsigned>(runs));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int constraint = 0, exits = 0, qp_failures = 0, failed = 0, converging = 0;
    double cost_sum = 0.0, max_rate = 0.0, min_r2 = 1.0;
    io::Json per_run = io::Json::array();
    for (int i = 0; i < runs; ++i) {
      const RunOutcome& o = outcomes[static_cast<size_t>(i)];
      const auto& r = o.audit;
      constraint += r.constraint_violations;
      exits += r.tube_exits;
      qp_failures += r.qp_failures;
      if (!o.error.empty()) ++failed;
      cost_sum += r.cost;
      if (r.decay.fitted) {
        max_rate = std::max(max_rate, r.decay.rate);
        min_r2 = std::min(min_r2, r.decay.r_squared);
      }
      // A run whose distance never rises above the fit threshold counts as
      // converged: there is nothing left to decay.
      if (o.error.empty() && (!r.decay.fitted || (r.decay.rate < 1.0 && r.decay.r_squared >= 0.9))) ++converging;
      io::Json entry{{"run", i},
                     {"seed", o.seed},
                     {"completed", o.completed},
                     {"cost", r.cost},
                     {"constraint_violations", r.constraint_violations},
                     {"tube_exits", r.tube_exits},
                     {"qp_failures", r.qp_failures},
                     {"decay", decay_json(r.decay)}};
      if (!o.error.empty()) entry["error"] = o.error;
      per_run.push_back(std::move(entry));
    }
    const int violations = constraint + exits + qp_failures + failed;
    io::Json summary{{"artifact", artifact_path.string()},
                     {"rng", sim::Rng::kName},
                     {"seed", seed},
                     {"runs", runs},
                     {"steps", base.steps},
                     {"disturbance", std::string(sim::to_string(base.disturbance))},
                     {"disturbance_scale", base.disturbance_scale},
                     {"violations", violations},
                     {"constraint_violations", constraint},
                     {"tube_exits", exits},
                     {"qp_failures", qp_failures},
                     {"failed_runs", failed},
                     {"mean_cost", cost_sum / runs},
                     {"decay", {{"converging_runs", converging}, {"max_rate", max_rate}, {"min_r_squared", min_r2}}},
                     {"per_run", std::move(per_run)}};
    io::write_json_file(out_dir / "summary.json", summary);

    io.out << "runs " << runs << ", violations " << violations << " (constraints " << constraint << ", tube exits "
           << exits << ", QP failures " << qp_failures << ", failed runs " << failed << "), mean cost "
           << fmt(cost_sum / runs) << ", converging runs " << converging << "/" << runs << ", max decay rate "
           << fmt(max_rate) << "\n";
    if (!io.quiet) io.out << "logs and summary.json written to " << out_dir.string() << "\n";
    if (violations > 0) {
      io.err << "error in stage 'simulate': " << violations << " violation(s) recorded; see summary.json\n";
      return kExitSynthesis;
    }
    return kExitOk;
  });
}

int cmd_feasible(const fs::path& artifact_path, const std::string& grid, const fs::path& out, Streams io) {
  return guarded(io, "feasible", [&] {
    const auto [a1, a2] = sim::parse_grid(grid);
    const mpc::ControllerArtifact a = load_checked_artifact(artifact_path);
    if (a.plant.sys.n() != 2) {
      io.err << "warning: feasibility scan varies x1 and x2 and holds the other " << a.plant.sys.n() - 2
             << " coordinates at zero\n";
    }
    const auto points = sim::feasible_region_scan(a, a1, a2);
    std::ofstream csv = open_output(out);
    sim::write_feasible_csv(csv, points);
    const auto feasible = std::count_if(points.begin(), points.end(), [](const auto& p) { return p.feasible; });
    io.out << feasible << " of " << points.size() << " grid points feasible\n";
    if (!io.quiet) io.out << "grid written to " << out.string() << "\n";
    return kExitOk;
  });
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Output-feedback tube MPC: synthesis, RPI comparison, simulation"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Print only the report on stdout");

  std::string problem, artifact, output, eps_text, grid;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;

  auto* synth = app.add_subcommand("synthesize", "Synthesize a controller artifact from a problem file");
  synth->add_option("--problem", problem, "Problem JSON")->required();
  synth->add_option("--out", output, "Artifact JSON to write")->required();

  auto* rpi_cmd = app.add_subcommand("rpi", "RPI set tools");
  rpi_cmd->require_subcommand(1);
  auto* compare = rpi_cmd->add_subcommand("compare", "Compare RPI constructions per ε");
  compare->add_option("--problem", problem, "Problem JSON")->required();
  compare->add_option("--eps", eps_text, "Comma-separated ε values (default: the problem's list)");
  compare->add_option("--out", output, "CSV to write")->required();

  auto* simulate = app.add_subcommand("simulate", "Run a seeded closed-loop batch");
  simulate->add_option("--problem", problem, "Problem JSON with a simulation block")->required();
  simulate->add_option("--artifact", artifact, "Controller artifact JSON")->required();
  simulate->add_option("--runs", runs, "Number of runs (default: the problem's)");
  simulate->add_option("--seed", seed, "Batch seed (default: the problem's)");
  simulate->add_option("--workers", workers, "Worker threads (default: hardware concurrency)");
  simulate->add_option("--out", output, "Output directory")->required();

  auto* feasible = app.add_subcommand("feasible", "Scan MPC feasibility over a grid");
  feasible->add_option("--problem", problem, "Problem JSON (checked, optional)");
  feasible->add_option("--artifact", artifact, "Controller artifact JSON")->required();
  feasible->add_option("--grid", grid, "x1min:x1max:n1,x2min:x2max:n2")->required();
  feasible->add_option("--out", output, "CSV to write")->required();

  for (auto* cmd : {synth, compare, simulate, feasible}) cmd->add_flag("--quiet", quiet, "Print only the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  log::set_level(quiet ? log::Level::kWarning : log::Level::kInfo);
  Streams io{out, err, quiet};
  if (synth->parsed()) return cmd_synthesize(problem, output, io);
  if (compare->parsed()) {
    std::vector<double> eps;
    if (!eps_text.empty()) {
      try {
        eps = parse_eps_list(eps_text);
      } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
      }
    }
    return cmd_rpi_compare(problem, eps, output, io);
  }
  if (simulate->parsed()) return cmd_simulate(problem, artifact, runs, seed, output, io, workers);
  if (feasible->parsed()) {
    if (!problem.empty()) {
      const int rc = guarded(io, "feasible", [&] {
        io::load_problem(problem);
        return kExitOk;
      });
      if (rc != kExitOk) return rc;
    }
    return cmd_feasible(artifact, grid, output, io);
  }
  return kExitValidation;
}

}  // namespace tubempc::cli
