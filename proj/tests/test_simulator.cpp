#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "tubempc/problem.hpp"
#include "tubempc/simulator.hpp"

using namespace tubempc;
using namespace tubempc::sim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Demo {
  io::ProblemFile problem;
  mpc::ControllerArtifact artifact;
};

Demo load_demo(const char* name) {
  auto pf = io::load_problem(std::filesystem::path(TUBEMPC_PROBLEMS_DIR) / name);
  auto a = mpc::synthesize(*pf.plant, pf.synthesis);
  return {std::move(pf), std::move(a)};
}

const Demo& scalar_demo() {
  static const Demo d = load_demo("scalar_chain.json");
  return d;
}

const Demo& double_integrator() {
  static const Demo d = load_demo("double_integrator.json");
  return d;
}

std::string csv_of(const TrajectoryLog& log) {
  std::ostringstream s;
  write_csv(s, log);
  return s.str();
}

}  // namespace

TEST(Rng, StableSequenceAndRange) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    differs |= x != c.uniform();
  }
  EXPECT_TRUE(differs);
  // mt19937_64 with seed 5489 has a documented first output.
  Rng ref(5489);
  EXPECT_EQ(ref.uniform(), static_cast<double>(14514284786278117030ULL >> 11) * 0x1.0p-53);
}

TEST(Rng, RunSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(run_seed(7, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(run_seed(7, 3), run_seed(7, 3));
  EXPECT_NE(run_seed(7, 3), run_seed(8, 3));
}

TEST(SampleDisturbance, BoxOnlyAndUnbiased) {
  const auto box = geometry::HPolytope::box((VectorXd(2) << -1, 2).finished(), (VectorXd(2) << 3, 4).finished());
  Rng rng(1);
  VectorXd mean = VectorXd::Zero(2);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const VectorXd w = sample_disturbance(box, rng);
    ASSERT_TRUE(box.contains(w, 0.0));
    mean += w / n;
  }
  EXPECT_NEAR(mean[0], 1.0, 0.05);
  EXPECT_NEAR(mean[1], 3.0, 0.02);

  MatrixXd H(3, 2);
  H << 1, 1, -1, 0, 0, -1;
  const geometry::HPolytope simplex(H, VectorXd::Ones(3));
  try {
    sample_disturbance(simplex, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonBoxSet);
  }
}

TEST(DecayFit, ExactGeometric) {
  std::vector<double> d;
  for (int k = 0; k < 10; ++k) d.push_back(3.0 * std::pow(0.5, k));
  d.push_back(0.0);
  const auto fit = fit_geometric_decay(d);
  ASSERT_TRUE(fit.fitted);
  EXPECT_NEAR(fit.rate, 0.5, 1e-12);
  EXPECT_NEAR(fit.scale, 3.0, 1e-10);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  EXPECT_EQ(fit.points, 10);
  EXPECT_FALSE(fit_geometric_decay({1.0, 0.5, 0.0, 1e-9}).fitted);
}

TEST(Grid, Parse) {
  const auto [a, b] = parse_grid("-1:1:5,0:2:3");
  EXPECT_EQ(a.count, 5);
  EXPECT_DOUBLE_EQ(a.lo, -1);
  EXPECT_DOUBLE_EQ(b.hi, 2);
  for (const char* bad : {"1:0:3,0:1:2", "0:1:3", "0:1:0,0:1:2", "0:1:3x,0:1:2", "a:b:c,0:1:1"}) {
    EXPECT_THROW(parse_grid(bad), Error) << bad;
  }
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.x0 = VectorXd::Zero(2);
  EXPECT_NO_THROW(cfg.validate(2));
  EXPECT_THROW(cfg.validate(3), Error);
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(2), Error);
  cfg.steps = 5;
  cfg.x0.reset();
  EXPECT_THROW(cfg.validate(2), Error);
  cfg.x0_lower = VectorXd::Ones(2);
  cfg.x0_upper = VectorXd::Zero(2);
  EXPECT_THROW(cfg.validate(2), Error);
}

TEST(ClosedLoop, ZeroNoiseKeepsAllStatesTogether) {
  const auto& d = scalar_demo();
  SimConfig cfg;
  cfg.x0 = VectorXd::Constant(1, 2.5);
  cfg.disturbance = DisturbanceMode::kZero;
  cfg.steps = 30;
  const auto log = run_closed_loop(d.artifact, cfg);
  ASSERT_EQ(log.steps.size(), 30u);
  for (const auto& st : log.steps) {
    EXPECT_NEAR((st.x - st.xbar).norm(), 0.0, 1e-12);
    EXPECT_NEAR((st.xhat - st.xbar).norm(), 0.0, 1e-12);
    EXPECT_NEAR((st.u - st.ubar).norm(), 0.0, 1e-12);
  }
  EXPECT_LT(std::abs(log.x_final[0]), 1e-6);
}

TEST(ClosedLoop, SeededRunsAreBitIdentical) {
  const auto& d = double_integrator();
  SimConfig cfg = d.problem.simulation;
  cfg.steps = 20;
  cfg.seed = 99;
  const std::string a = csv_of(run_closed_loop(d.artifact, cfg));
  const std::string b = csv_of(run_closed_loop(d.artifact, cfg));
  EXPECT_EQ(a, b);
  cfg.seed = 100;
  EXPECT_NE(a, csv_of(run_closed_loop(d.artifact, cfg)));
}

TEST(ClosedLoop, CsvLayout) {
  const auto& d = double_integrator();
  SimConfig cfg = d.problem.simulation;
  cfg.steps = 3;
  const std::string csv = csv_of(run_closed_loop(d.artifact, cfg));
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header,
            "k,x_0,x_1,xhat_0,xhat_1,xbar_0,xbar_1,u_0,ubar_0,z_0,z_1,w_0,w_1,v_0,xi_0,xi_1,xi_2,xi_3,qp_status,"
            "stage_cost");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(ClosedLoop, DesignDisturbancesGiveCleanAudit) {
  const auto& d = double_integrator();
  for (std::uint64_t i = 0; i < 5; ++i) {
    SimConfig cfg = d.problem.simulation;
    cfg.seed = run_seed(3, i);
    const auto log = run_closed_loop(d.artifact, cfg);
    const auto report = audit(log, d.artifact);
    EXPECT_TRUE(report.clean()) << (report.violations.empty() ? "" : report.violations.front());
    EXPECT_EQ(report.distance.size(), log.steps.size());
    EXPECT_GT(report.cost, 0.0);
    EXPECT_EQ(report.distance.back(), 0.0);
  }
}

TEST(ClosedLoop, InflatedDisturbancesAreCaught) {
  const auto& d = scalar_demo();
  SimConfig cfg = d.problem.simulation;
  cfg.disturbance_scale = 40.0;
  cfg.strict = false;
  const auto log = run_closed_loop(d.artifact, cfg);
  const auto report = audit(log, d.artifact);
  EXPECT_GT(report.tube_exits, 0);
  EXPECT_FALSE(report.clean());

  cfg.strict = true;
  try {
    run_closed_loop(d.artifact, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvariantViolation);
  }
}

TEST(ClosedLoop, InfeasibleStart) {
  const auto& d = scalar_demo();
  SimConfig cfg;
  cfg.x0 = VectorXd::Constant(1, 9.9);
  try {
    run_closed_loop(d.artifact, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
  cfg.strict = false;
  const auto log = run_closed_loop(d.artifact, cfg);
  EXPECT_FALSE(log.completed);
  EXPECT_EQ(log.steps.size(), 1u);
}

TEST(ClosedLoop, InitialErrorMustFitTheTube) {
  const auto& d = scalar_demo();
  SimConfig cfg = d.problem.simulation;
  cfg.initial_error = VectorXd::Constant(1, 5.0);
  EXPECT_THROW(run_closed_loop(d.artifact, cfg), Error);
}

TEST(DistanceToTube, Basics) {
  const auto& d = scalar_demo();
  const auto& R = d.artifact.tube.set;
  EXPECT_NEAR(distance_to_tube(VectorXd::Zero(1), R), 0.0, 1e-9);
  // [I I]R is an interval [-r, r]; the distance grows linearly outside it.
  const double r = geometry::support_value(geometry::MappedSet((MatrixXd(1, 2) << 1, 1).finished(), R),
                                           VectorXd::Ones(1));
  EXPECT_NEAR(distance_to_tube(VectorXd::Constant(1, r + 1.5), R), 1.5, 1e-7);
  EXPECT_NEAR(distance_to_tube(VectorXd::Constant(1, -r - 0.5), R), 0.5, 1e-7);
}

TEST(FeasibleScan, OriginFeasibleFarInfeasibleAndSymmetric) {
  const auto& d = double_integrator();
  const GridAxis ax{-6.0, 6.0, 9}, av{-3.0, 3.0, 7};
  const auto pts = feasible_region_scan(d.artifact, ax, av);
  ASSERT_EQ(pts.size(), 63u);
  auto at = [&](int i, int j) { return pts[static_cast<size_t>(i * 7 + j)]; };
  EXPECT_TRUE(at(4, 3).feasible);   // origin
  EXPECT_FALSE(at(0, 0).feasible);  // outside Z
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 7; ++j) EXPECT_EQ(at(i, j).feasible, at(8 - i, 6 - j).feasible) << i << "," << j;
  }
  // The feasible region is convex, so each grid line meets it in one run.
  for (int i = 0; i < 9; ++i) {
    int switches = 0;
    for (int j = 1; j < 7; ++j) switches += at(i, j).feasible != at(i, j - 1).feasible;
    EXPECT_LE(switches, 2);
  }
  std::ostringstream csv;
  write_feasible_csv(csv, pts);
  EXPECT_EQ(csv.str().substr(0, 18), "x1,x2,feasible\n-6,");
}
