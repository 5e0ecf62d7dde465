#include "tubempc/json_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace tubempc::io {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::kValidation, where + ": " + what);
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(where, "non-finite number");
  return v;
}

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) bad(where, std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

Json to_json(const MatrixXd& M) {
  Json rows = Json::array();
  for (int i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const VectorXd& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json to_json(const geometry::HPolytope& P) { return Json{{"H", to_json(P.H())}, {"b", to_json(P.b())}}; }

Json to_json(const rpi::RpiResult& r) {
  const auto& d = r.diagnostics;
  return Json{{"set", to_json(r.set)},
              {"k", r.k},
              {"method", std::string(rpi::to_string(r.method))},
              {"diagnostics",
               {{"lp_objective", d.lp_objective},
                {"candidate_rows", d.candidate_rows},
                {"rows", d.rows},
                {"lp_variables", d.lp_variables},
                {"lp_constraints", d.lp_constraints},
                {"wall_time_s", d.wall_time_s}}}};
}

Json to_json(const mpc::ControllerArtifact& a) {
  const auto& s = a.plant.sys;
  return Json{{"schema", kArtifactSchema},
              {"plant",
               {{"A", to_json(s.A)},
                {"B", to_json(s.B)},
                {"C", to_json(s.C)},
                {"H", to_json(s.H)},
                {"Z", to_json(a.plant.Z)},
                {"U", to_json(a.plant.U)},
                {"W", to_json(a.plant.W)},
                {"V", to_json(a.plant.V)}}},
              {"gains",
               {{"K", to_json(a.gains.K)},
                {"L", to_json(a.gains.L)},
                {"Kf", to_json(a.gains.Kf)},
                {"P", to_json(a.gains.P)}}},
              {"tube", to_json(a.tube)},
              {"Zbar", to_json(a.Zbar)},
              {"Ubar", to_json(a.Ubar)},
              {"XN", to_json(a.XN)},
              {"N", a.N},
              {"Q", to_json(a.Q)},
              {"R", to_json(a.R)},
              {"delta_mode", std::string(mpc::to_string(a.delta_mode))},
              {"eta", a.eta},
              {"rng", "mt19937_64"}};
}

MatrixXd matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where, "expected a nonempty array of rows");
  // A flat array is read as a single row.
  if (!j.front().is_array()) {
    MatrixXd M(1, j.size());
    for (size_t c = 0; c < j.size(); ++c) M(0, c) = number(j[c], where + "[" + std::to_string(c) + "]");
    return M;
  }
  const size_t cols = j.front().size();
  MatrixXd M(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    const std::string at = where + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) bad(at, "rows must be arrays of equal length " + std::to_string(cols));
    for (size_t c = 0; c < cols; ++c) M(r, c) = number(j[r][c], at + "[" + std::to_string(c) + "]");
  }
  return M;
}

VectorXd vector_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return VectorXd::Constant(1, number(j, where));
  if (!j.is_array()) bad(where, "expected an array of numbers");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

geometry::HPolytope polytope_from_json(const Json& j, const std::string& where) {
  const MatrixXd H = matrix_from_json(field(j, "H", where), where + ".H");
  const VectorXd b = vector_from_json(field(j, "b", where), where + ".b");
  if (H.rows() != b.size()) bad(where, "H has " + std::to_string(H.rows()) + " rows but b has " + std::to_string(b.size()));
  try {
    return geometry::HPolytope(H, b);
  } catch (const Error& e) {
    bad(where, e.what());
  }
}

rpi::RpiResult rpi_result_from_json(const Json& j, const std::string& where) {
  rpi::RpiResult r{polytope_from_json(field(j, "set", where), where + ".set"), 0, rpi::Method::kAlgorithm1, {}};
  r.k = static_cast<int>(number(field(j, "k", where), where + ".k"));
  const Json& method = field(j, "method", where);
  if (!method.is_string()) bad(where + ".method", "expected a string");
  r.method = rpi::method_from_string(method.get<std::string>());
  if (j.contains("diagnostics")) {
    const Json& d = j["diagnostics"];
    const std::string at = where + ".diagnostics";
    auto& out = r.diagnostics;
    if (d.contains("lp_objective")) out.lp_objective = number(d["lp_objective"], at + ".lp_objective");
    if (d.contains("candidate_rows")) out.candidate_rows = static_cast<int>(number(d["candidate_rows"], at));
    if (d.contains("rows")) out.rows = static_cast<int>(number(d["rows"], at));
    if (d.contains("lp_variables")) out.lp_variables = static_cast<int>(number(d["lp_variables"], at));
    if (d.contains("lp_constraints")) out.lp_constraints = static_cast<int>(number(d["lp_constraints"], at));
    if (d.contains("wall_time_s")) out.wall_time_s = number(d["wall_time_s"], at);
  }
  return r;
}

mpc::ControllerArtifact artifact_from_json(const Json& j) {
  const std::string root = "artifact";
  const Json& schema = field(j, "schema", root);
  if (!schema.is_string() || schema.get<std::string>() != kArtifactSchema) {
    bad(root + ".schema", std::string("expected \"") + kArtifactSchema + "\"");
  }
  const Json& p = field(j, "plant", root);
  const std::string pw = root + ".plant";
  auto mat = [&](const Json& obj, const char* key, const std::string& at) {
    return matrix_from_json(field(obj, key, at), at + "." + key);
  };
  auto set = [&](const Json& obj, const char* key, const std::string& at) {
    return polytope_from_json(field(obj, key, at), at + "." + key);
  };
  synthesis::LtiSystem sys(mat(p, "A", pw), mat(p, "B", pw), mat(p, "C", pw), mat(p, "H", pw));
  mpc::PlantModel plant(std::move(sys), set(p, "Z", pw), set(p, "U", pw), set(p, "W", pw), set(p, "V", pw));

  const Json& g = field(j, "gains", root);
  const std::string gw = root + ".gains";
  synthesis::GainSet gains;
  gains.K = mat(g, "K", gw);
  gains.L = mat(g, "L", gw);
  gains.Kf = mat(g, "Kf", gw);
  gains.P = mat(g, "P", gw);

  const Json& mode = field(j, "delta_mode", root);
  if (!mode.is_string()) bad(root + ".delta_mode", "expected a string");
  return mpc::ControllerArtifact{std::move(plant),
                                 std::move(gains),
                                 rpi_result_from_json(field(j, "tube", root), root + ".tube"),
                                 set(j, "Zbar", root),
                                 set(j, "Ubar", root),
                                 set(j, "XN", root),
                                 static_cast<int>(number(field(j, "N", root), root + ".N")),
                                 mat(j, "Q", root),
                                 mat(j, "R", root),
                                 mpc::delta_mode_from_string(mode.get<std::string>()),
                                 number(field(j, "eta", root), root + ".eta")};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kValidation, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // Translate the byte offset into line and column.
    const size_t offset = std::min<size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    size_t line = 1, col = 1;
    for (size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                            ": malformed JSON (" + e.what() + ")");
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kValidation, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void save_artifact(const std::filesystem::path& path, const mpc::ControllerArtifact& a) {
  write_json_file(path, to_json(a));
}

mpc::ControllerArtifact load_artifact(const std::filesystem::path& path) {
  return artifact_from_json(read_json_file(path));
}

}  // namespace tubempc::io
