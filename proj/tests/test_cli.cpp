#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "tubempc/cli.hpp"
#include "tubempc/json_io.hpp"
#include "tubempc/problem.hpp"

using namespace tubempc;
namespace fs = std::filesystem;

namespace {

const fs::path kProblems = TUBEMPC_PROBLEMS_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "tubempc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tubempc_cli_" + std::string(
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Writes a modified copy of a demo problem.
  fs::path variant(const char* demo, const std::function<void(io::Json&)>& edit) {
    io::Json j = io::read_json_file(kProblems / demo);
    edit(j);
    const fs::path p = dir_ / (std::string("variant_") + demo);
    io::write_json_file(p, j);
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthesizeWritesValidArtifact) {
  const fs::path art = dir_ / "scalar.json";
  const auto r = run({"synthesize", "--problem", (kProblems / "scalar_chain.json").string(), "--out", art.string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("Z tightening"), std::string::npos);
  EXPECT_NE(r.out.find("%"), std::string::npos);
  const auto a = io::load_artifact(art);
  EXPECT_NO_THROW(mpc::validate_artifact(a));
}

TEST_F(Cli, QuietPrintsOnlyTheReport) {
  const fs::path art = dir_ / "scalar.json";
  const auto loud = run({"synthesize", "--problem", (kProblems / "scalar_chain.json").string(), "--out", art.string()});
  const auto quiet =
      run({"--quiet", "synthesize", "--problem", (kProblems / "scalar_chain.json").string(), "--out", art.string()});
  ASSERT_EQ(quiet.code, 0);
  EXPECT_EQ(quiet.out.rfind("Z tightening", 0), 0u) << quiet.out;
  EXPECT_EQ(quiet.out.find("artifact written"), std::string::npos);
  EXPECT_NE(loud.out.find("artifact written"), std::string::npos);
}

TEST_F(Cli, MalformedJsonExitsOneWithPosition) {
  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << "{\n  \"plant\": {\n    \"A\": [[1.0]],,\n  }\n}\n";
  const auto r = run({"synthesize", "--problem", bad.string(), "--out", (dir_ / "a.json").string()});
  EXPECT_EQ(r.code, cli::kExitValidation);
  EXPECT_NE(r.err.find("bad.json:3:"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "a.json"));
}

TEST_F(Cli, FieldErrorsExitOne) {
  const auto p = variant("scalar_chain.json", [](io::Json& j) { j["plant"]["C"] = io::Json::parse("[[1, 2]]"); });
  const auto r = run({"synthesize", "--problem", p.string(), "--out", (dir_ / "a.json").string()});
  EXPECT_EQ(r.code, cli::kExitValidation);
  EXPECT_NE(r.err.find("problem.plant.C"), std::string::npos) << r.err;
}

TEST_F(Cli, OversizedDisturbanceExitsTwoNamingTighten) {
  const auto p = variant("scalar_chain.json", [](io::Json& j) { j["plant"]["W"]["b"] = io::Json::parse("[4.0, 4.0]"); });
  const auto r = run({"synthesize", "--problem", p.string(), "--out", (dir_ / "a.json").string()});
  EXPECT_EQ(r.code, cli::kExitSynthesis);
  EXPECT_NE(r.err.find("'tighten'"), std::string::npos) << r.err;
}

TEST_F(Cli, ArgumentErrorsExitOne) {
  EXPECT_EQ(run({}).code, cli::kExitValidation);
  EXPECT_EQ(run({"synthesize", "--problem", "x.json"}).code, cli::kExitValidation);
  EXPECT_EQ(run({"launch"}).code, cli::kExitValidation);
  EXPECT_EQ(run({"rpi", "compare", "--problem", (kProblems / "scalar_chain.json").string(), "--eps", "0.1,abc",
                 "--out", (dir_ / "c.csv").string()})
                .code,
            cli::kExitValidation);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, RpiCompareScalarChain) {
  const fs::path csv = dir_ / "compare.csv";
  const auto r = run({"rpi", "compare", "--problem", (kProblems / "scalar_chain.json").string(), "--eps", "0.1",
                      "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "eps,method,k,rows,wall_time_s,direction,reference_offset,offset,delta_abs,delta_pct");
  EXPECT_NE(text.find("0.1,sdt,1,2,"), std::string::npos) << text;
  EXPECT_NE(text.find(",2,2.0625,0.0625,3.125\n"), std::string::npos) << text;
  EXPECT_EQ(text.find("polygon"), std::string::npos);
  EXPECT_NE(r.err.find("polygon comparison skipped"), std::string::npos);
}

TEST_F(Cli, RpiCompare2DIncludesPolygon) {
  const fs::path csv = dir_ / "compare.csv";
  const auto r = run({"rpi", "compare", "--problem", (kProblems / "rpi_demo_2d.json").string(), "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(csv);
  EXPECT_NE(text.find(",polygon,"), std::string::npos);
  // P_∞(ε) contains R(k̄(ε)), so SDT deltas are never negative. The polygon
  // set has other normals and may be tighter in some directions.
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  int count = 0;
  while (std::getline(lines, line)) {
    if (line.find(",sdt,") == std::string::npos) continue;
    const double pct = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(pct, -1e-5) << line;
    ++count;
  }
  EXPECT_GT(count, 0);
}

TEST_F(Cli, SimulateZeroNoiseAndDeterminism) {
  const fs::path art = dir_ / "di.json";
  ASSERT_EQ(run({"synthesize", "--problem", (kProblems / "double_integrator.json").string(), "--out", art.string()}).code,
            0);
  const auto quiet_problem = variant("double_integrator.json", [](io::Json& j) {
    j["simulation"]["disturbance"] = "zero";
    j["simulation"]["initial_error"] = io::Json::parse("[0, 0]");
    j["simulation"]["steps"] = 15;
  });
  const auto r = run({"simulate", "--problem", quiet_problem.string(), "--artifact", art.string(), "--runs", "1",
                      "--out", (dir_ / "zero").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  // x and x̄ columns agree when nothing perturbs the loop.
  std::istringstream csv(slurp(dir_ / "zero" / "run_0000.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::vector<double> f;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell == "Optimal" ? 0.0 : std::stod(cell));
    EXPECT_NEAR(f[1], f[5], 1e-12);
    EXPECT_NEAR(f[2], f[6], 1e-12);
  }

  // Same seed: identical logs whatever the worker count.
  const auto p = (kProblems / "double_integrator.json").string();
  ASSERT_EQ(run({"simulate", "--problem", p, "--artifact", art.string(), "--runs", "4", "--seed", "11", "--workers",
                 "1", "--out", (dir_ / "a").string()})
                .code,
            0);
  ASSERT_EQ(run({"simulate", "--problem", p, "--artifact", art.string(), "--runs", "4", "--seed", "11", "--workers",
                 "3", "--out", (dir_ / "b").string()})
                .code,
            0);
  for (const char* f : {"run_0000.csv", "run_0001.csv", "run_0002.csv", "run_0003.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const auto summary = io::read_json_file(dir_ / "a" / "summary.json");
  EXPECT_EQ(summary["violations"], 0);
  EXPECT_EQ(summary["runs"], 4);
  EXPECT_EQ(summary["per_run"].size(), 4u);
  EXPECT_EQ(summary["rng"], "mt19937_64");
}

TEST_F(Cli, SimulateReportsViolationsWithExitTwo) {
  const fs::path art = dir_ / "scalar.json";
  ASSERT_EQ(run({"synthesize", "--problem", (kProblems / "scalar_chain.json").string(), "--out", art.string()}).code, 0);
  const auto p = variant("scalar_chain.json", [](io::Json& j) {
    j["simulation"]["disturbance_scale"] = 40.0;
    j["simulation"]["strict"] = false;
  });
  const auto r = run({"simulate", "--problem", p.string(), "--artifact", art.string(), "--runs", "2", "--out",
                      (dir_ / "s").string()});
  EXPECT_EQ(r.code, cli::kExitSynthesis);
  const auto summary = io::read_json_file(dir_ / "s" / "summary.json");
  EXPECT_GT(summary["tube_exits"].get<int>(), 0);
}

TEST_F(Cli, MissingArtifactExitsOne) {
  const auto r = run({"simulate", "--problem", (kProblems / "scalar_chain.json").string(), "--artifact",
                      (dir_ / "nope.json").string(), "--out", (dir_ / "s").string()});
  EXPECT_EQ(r.code, cli::kExitValidation);
  EXPECT_NE(r.err.find("artifact not found"), std::string::npos);
}

TEST_F(Cli, FeasibleGrid) {
  const fs::path art = dir_ / "di.json";
  ASSERT_EQ(run({"synthesize", "--problem", (kProblems / "double_integrator.json").string(), "--out", art.string()}).code,
            0);
  const fs::path csv = dir_ / "grid.csv";
  const auto r = run({"feasible", "--problem", (kProblems / "double_integrator.json").string(), "--artifact",
                      art.string(), "--grid", "-6:6:5,-2:2:5", "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(csv);
  EXPECT_NE(text.find("\n0,0,1\n"), std::string::npos) << text;
  EXPECT_NE(text.find("\n-6,-2,0\n"), std::string::npos) << text;
  EXPECT_EQ(run({"feasible", "--artifact", art.string(), "--grid", "bad", "--out", csv.string()}).code,
            cli::kExitValidation);
}
