#include "tubempc/problem.hpp"

#include <cmath>
#include <initializer_list>
#include <set>

#include "tubempc/synthesis.hpp"

namespace tubempc::io {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what,
                      ErrorKind kind = ErrorKind::kValidation) {
  throw Error(kind, where + ": " + what);
}

// Rejects keys outside `allowed`, which catches misspelled optional fields
// that would otherwise be silently ignored.
void only_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(where, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) bad(where, "unknown field '" + key + "'");
  }
}

const Json& need(const Json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) bad(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(where, "non-finite number");
  return v;
}

int integer(const Json& j, const std::string& where) {
  const double v = number(j, where);
  if (v != std::floor(v) || std::abs(v) > 1e9) bad(where, "expected an integer");
  return static_cast<int>(v);
}

std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) bad(where, "expected a string");
  return j.get<std::string>();
}

void shape(const MatrixXd& M, long rows, long cols, const std::string& where) {
  if (M.rows() != rows || M.cols() != cols) {
    bad(where,
        "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " + std::to_string(M.rows()) + "x" +
            std::to_string(M.cols()),
        ErrorKind::kDimension);
  }
}

void set_dim(const geometry::HPolytope& P, int dim, const std::string& where) {
  if (P.dim() != dim) {
    bad(where, "set lives in dimension " + std::to_string(P.dim()) + ", expected " + std::to_string(dim),
        ErrorKind::kDimension);
  }
}

void vec_dim(const VectorXd& v, int dim, const std::string& where) {
  if (v.size() != dim) {
    bad(where, "expected " + std::to_string(dim) + " entries, got " + std::to_string(v.size()), ErrorKind::kDimension);
  }
}

struct PlantData {
  MatrixXd A, B, C, H;
  geometry::HPolytope Z, U, W, V;
};

PlantData read_plant(const Json& p, const std::string& at) {
  only_keys(p, at, {"A", "B", "C", "H", "Z", "U", "W", "V"});
  auto mat = [&](const char* key) { return matrix_from_json(need(p, key, at), at + "." + key); };
  auto set = [&](const char* key) { return polytope_from_json(need(p, key, at), at + "." + key); };
  PlantData d{mat("A"), mat("B"), mat("C"), mat("H"), set("Z"), set("U"), set("W"), set("V")};
  const long n = d.A.rows();
  shape(d.A, n, n, at + ".A");
  if (d.B.rows() != n) bad(at + ".B", "needs " + std::to_string(n) + " rows to match A", ErrorKind::kDimension);
  if (d.C.cols() != n) bad(at + ".C", "needs " + std::to_string(n) + " columns to match A", ErrorKind::kDimension);
  if (d.H.cols() != n) bad(at + ".H", "needs " + std::to_string(n) + " columns to match A", ErrorKind::kDimension);
  set_dim(d.Z, static_cast<int>(d.H.rows()), at + ".Z");
  set_dim(d.U, static_cast<int>(d.B.cols()), at + ".U");
  set_dim(d.W, static_cast<int>(n), at + ".W");
  set_dim(d.V, static_cast<int>(d.C.rows()), at + ".V");
  return d;
}

void read_weights(const Json& w, const std::string& at, const PlantData& d, mpc::SynthesisConfig& cfg) {
  only_keys(w, at, {"Q", "Qz", "gamma", "R"});
  const long n = d.A.rows();
  if (w.contains("Q") == w.contains("Qz")) bad(at, "give exactly one of 'Q' or 'Qz'");
  if (w.contains("Q")) {
    if (w.contains("gamma")) bad(at + ".gamma", "only used together with 'Qz'");
    cfg.Q = matrix_from_json(w["Q"], at + ".Q");
    shape(cfg.Q, n, n, at + ".Q");
  } else {
    const MatrixXd Qz = matrix_from_json(w["Qz"], at + ".Qz");
    shape(Qz, d.H.rows(), d.H.rows(), at + ".Qz");
    const double gamma = w.contains("gamma") ? number(w["gamma"], at + ".gamma") : 1e-6;
    if (gamma <= 0.0) bad(at + ".gamma", "must be positive");
    cfg.Q = synthesis::state_cost_from_output(d.H, Qz, gamma);
  }
  cfg.R = matrix_from_json(need(w, "R", at), at + ".R");
  shape(cfg.R, d.B.cols(), d.B.cols(), at + ".R");
}

void read_gains(const Json& g, const std::string& at, const PlantData& d, mpc::SynthesisConfig& cfg) {
  only_keys(g, at, {"K", "L", "Qo", "Ro"});
  const long n = d.A.rows(), m = d.B.cols(), p = d.C.rows();
  if (g.contains("K")) {
    cfg.K = matrix_from_json(g["K"], at + ".K");
    shape(*cfg.K, m, n, at + ".K");
  }
  if (g.contains("L")) {
    cfg.L = matrix_from_json(g["L"], at + ".L");
    shape(*cfg.L, n, p, at + ".L");
  }
  if (g.contains("Qo")) {
    cfg.Qo = matrix_from_json(g["Qo"], at + ".Qo");
    shape(cfg.Qo, n, n, at + ".Qo");
  }
  if (g.contains("Ro")) {
    cfg.Ro = matrix_from_json(g["Ro"], at + ".Ro");
    shape(cfg.Ro, p, p, at + ".Ro");
  }
}

void read_rpi(const Json& r, const std::string& at, ProblemFile& out) {
  only_keys(r, at, {"k", "k_max", "eps", "delta_mode", "eta", "terminal_cap"});
  auto& cfg = out.synthesis;
  if (r.contains("k")) {
    cfg.k = integer(r["k"], at + ".k");
    if (cfg.k < 0) bad(at + ".k", "must be ≥ 0");
  }
  if (r.contains("k_max")) {
    cfg.k_max = integer(r["k_max"], at + ".k_max");
    if (cfg.k_max < 0) bad(at + ".k_max", "must be ≥ 0");
  }
  if (r.contains("terminal_cap")) {
    cfg.terminal_cap = integer(r["terminal_cap"], at + ".terminal_cap");
    if (cfg.terminal_cap < 1) bad(at + ".terminal_cap", "must be ≥ 1");
  }
  if (r.contains("eps")) {
    const VectorXd eps = vector_from_json(r["eps"], at + ".eps");
    if (eps.size() == 0) bad(at + ".eps", "needs at least one value");
    out.eps.assign(eps.data(), eps.data() + eps.size());
    for (double e : out.eps) {
      if (!(e > 0.0)) bad(at + ".eps", "values must be positive");
    }
  }
  if (r.contains("delta_mode")) {
    try {
      cfg.delta_mode = mpc::delta_mode_from_string(text(r["delta_mode"], at + ".delta_mode"));
    } catch (const Error& e) {
      bad(at + ".delta_mode", e.what());
    }
  }
  if (r.contains("eta")) {
    cfg.eta = number(r["eta"], at + ".eta");
    if (!(cfg.eta > 0.0)) bad(at + ".eta", "must be positive");
  }
}

struct ErrorSystemData {
  MatrixXd A_e, E;
  std::optional<geometry::HPolytope> delta;
  std::optional<geometry::MappedSet> mapped;
  geometry::HPolytope phi;
};

ErrorSystemData read_error_system(const Json& e, const std::string& at) {
  only_keys(e, at, {"A_e", "delta", "E", "phi"});
  const MatrixXd A_e = matrix_from_json(need(e, "A_e", at), at + ".A_e");
  const long ne = A_e.rows();
  shape(A_e, ne, ne, at + ".A_e");
  const MatrixXd E = matrix_from_json(need(e, "E", at), at + ".E");
  if (E.cols() != ne) bad(at + ".E", "needs " + std::to_string(ne) + " columns to match A_e", ErrorKind::kDimension);
  const geometry::HPolytope phi = polytope_from_json(need(e, "phi", at), at + ".phi");
  set_dim(phi, static_cast<int>(E.rows()), at + ".phi");

  ErrorSystemData d{A_e, E, std::nullopt, std::nullopt, phi};
  const Json& delta = need(e, "delta", at);
  const std::string dw = at + ".delta";
  if (delta.is_object() && delta.contains("M")) {
    only_keys(delta, dw, {"M", "base"});
    const MatrixXd M = matrix_from_json(delta["M"], dw + ".M");
    if (M.rows() != ne) bad(dw + ".M", "needs " + std::to_string(ne) + " rows to match A_e", ErrorKind::kDimension);
    const geometry::HPolytope base = polytope_from_json(need(delta, "base", dw), dw + ".base");
    set_dim(base, static_cast<int>(M.cols()), dw + ".base");
    d.mapped.emplace(M, base);
  } else {
    only_keys(delta, dw, {"H", "b"});
    d.delta = polytope_from_json(delta, dw);
    set_dim(*d.delta, static_cast<int>(ne), dw);
  }
  return d;
}

void read_simulation(const Json& s, const std::string& at, int n, ProblemFile& out) {
  only_keys(s, at, {"steps", "seed", "runs", "x0", "x0_box", "initial_error", "disturbance", "disturbance_scale",
                    "strict"});
  auto& cfg = out.simulation;
  if (s.contains("steps")) cfg.steps = integer(s["steps"], at + ".steps");
  if (s.contains("seed")) {
    const double seed = number(s["seed"], at + ".seed");
    if (seed < 0 || seed != std::floor(seed)) bad(at + ".seed", "expected a non-negative integer");
    cfg.seed = s["seed"].get<std::uint64_t>();
  }
  if (s.contains("runs")) {
    out.runs = integer(s["runs"], at + ".runs");
    if (out.runs < 1) bad(at + ".runs", "must be ≥ 1");
  }
  if (s.contains("x0") && s.contains("x0_box")) bad(at, "give at most one of 'x0' or 'x0_box'");
  if (s.contains("x0")) {
    cfg.x0 = vector_from_json(s["x0"], at + ".x0");
    vec_dim(*cfg.x0, n, at + ".x0");
  } else if (s.contains("x0_box")) {
    const std::string bw = at + ".x0_box";
    only_keys(s["x0_box"], bw, {"lower", "upper"});
    cfg.x0_lower = vector_from_json(need(s["x0_box"], "lower", bw), bw + ".lower");
    cfg.x0_upper = vector_from_json(need(s["x0_box"], "upper", bw), bw + ".upper");
    vec_dim(cfg.x0_lower, n, bw + ".lower");
    vec_dim(cfg.x0_upper, n, bw + ".upper");
  } else {
    cfg.x0 = VectorXd::Zero(n);
  }
  if (s.contains("initial_error")) {
    cfg.initial_error = vector_from_json(s["initial_error"], at + ".initial_error");
    vec_dim(cfg.initial_error, n, at + ".initial_error");
  }
  if (s.contains("disturbance")) {
    try {
      cfg.disturbance = sim::disturbance_mode_from_string(text(s["disturbance"], at + ".disturbance"));
    } catch (const Error& e) {
      bad(at + ".disturbance", e.what());
    }
  }
  if (s.contains("disturbance_scale")) cfg.disturbance_scale = number(s["disturbance_scale"], at + ".disturbance_scale");
  if (s.contains("strict")) {
    if (!s["strict"].is_boolean()) bad(at + ".strict", "expected true or false");
    cfg.strict = s["strict"].get<bool>();
  }
  try {
    cfg.validate(n);
  } catch (const Error& e) {
    bad(at, e.what(), e.kind());
  }
}

}  // namespace

ProblemFile problem_from_json(const Json& j) {
  const std::string root = "problem";
  only_keys(j, root, {"name", "dt", "plant", "weights", "horizon", "gains", "rpi", "error_system", "simulation"});
  if (!j.contains("plant") && !j.contains("error_system")) bad(root, "needs a 'plant' or an 'error_system'");

  ProblemFile out;
  if (j.contains("name")) out.name = text(j["name"], root + ".name");
  if (j.contains("dt")) {
    out.dt = number(j["dt"], root + ".dt");
    if (out.dt < 0.0) bad(root + ".dt", "must be ≥ 0");
  }
  if (j.contains("rpi")) read_rpi(j["rpi"], root + ".rpi", out);

  // Shapes first, for every block, so that a file with a dimension mistake
  // never reaches a factorization.
  std::optional<PlantData> plant;
  if (j.contains("plant")) {
    plant = read_plant(j["plant"], root + ".plant");
    read_weights(need(j, "weights", root), root + ".weights", *plant, out.synthesis);
    if (j.contains("horizon")) {
      out.synthesis.N = integer(j["horizon"], root + ".horizon");
      if (out.synthesis.N < 1) bad(root + ".horizon", "must be ≥ 1");
    }
    if (j.contains("gains")) read_gains(j["gains"], root + ".gains", *plant, out.synthesis);
  } else {
    for (const char* key : {"weights", "horizon", "gains", "simulation"}) {
      if (j.contains(key)) bad(root + "." + key, "only meaningful together with 'plant'");
    }
  }
  std::optional<ErrorSystemData> es;
  if (j.contains("error_system")) es = read_error_system(j["error_system"], root + ".error_system");
  if (plant) {
    const Json empty = Json::object();
    read_simulation(j.contains("simulation") ? j["simulation"] : empty, root + ".simulation",
                    static_cast<int>(plant->A.rows()), out);
  }

  // Numerical checks (origin interior, boundedness, stability).
  if (plant) {
    try {
      synthesis::LtiSystem sys(plant->A, plant->B, plant->C, plant->H);
      out.plant.emplace(std::move(sys), plant->Z, plant->U, plant->W, plant->V);
    } catch (const Error& e) {
      bad(root + ".plant", e.what(), e.kind());
    }
  }
  if (es) {
    try {
      if (es->mapped) {
        out.error_system.emplace(es->A_e, *es->mapped, es->E, es->phi);
      } else {
        out.error_system.emplace(es->A_e, *es->delta, es->E, es->phi);
      }
    } catch (const Error& e) {
      bad(root + ".error_system", e.what(), e.kind());
    }
  }
  return out;
}

ProblemFile load_problem(const std::filesystem::path& path) { return problem_from_json(read_json_file(path)); }

}  // namespace tubempc::io
