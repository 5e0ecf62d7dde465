#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tubempc/error.hpp"
#include "tubempc/solver.hpp"

namespace tubempc::solver {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

LpProblem lp(Sense sense, VectorXd c, const MatrixXd& A, VectorXd b) {
  LpProblem p;
  p.sense = sense;
  p.objective = std::move(c);
  p.A_ineq = to_sparse(A);
  p.b_ineq = std::move(b);
  return p;
}

class LpBackends : public ::testing::TestWithParam<int> {
 protected:
  const LpSolver& solver() const {
    static const InteriorPointSolver ipm;
    static const DenseSimplexSolver simplex;
    static const AutoLpSolver autos;
    switch (GetParam()) {
      case 0: return ipm;
      case 1: return simplex;
      default: return autos;
    }
  }
};

TEST_P(LpBackends, BoundedMaximum) {
  // max x  s.t.  x ≤ 3
  const auto r = solver().solve_lp(lp(Sense::kMaximize, VectorXd::Ones(1), MatrixXd::Ones(1, 1), VectorXd::Constant(1, 3.0)));
  ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
  EXPECT_NEAR(r.objective, 3.0, 1e-7);
  EXPECT_NEAR(r.x[0], 3.0, 1e-7);
}

TEST_P(LpBackends, UnboundedAbove) {
  // max x  s.t.  x ≥ 0
  const auto r = solver().solve_lp(lp(Sense::kMaximize, VectorXd::Ones(1), -MatrixXd::Ones(1, 1), VectorXd::Zero(1)));
  EXPECT_EQ(r.status, SolveStatus::kUnbounded) << r.detail;
}

TEST_P(LpBackends, InfeasibleConstraints) {
  // max 0  s.t.  x ≤ -1, x ≥ 0
  MatrixXd A(2, 1);
  A << 1, -1;
  const auto r = solver().solve_lp(lp(Sense::kMaximize, VectorXd::Zero(1), A, (VectorXd(2) << -1, 0).finished()));
  EXPECT_EQ(r.status, SolveStatus::kInfeasible) << r.detail;
}

TEST_P(LpBackends, BoundsAndEqualities) {
  // min x + 2y  s.t.  x + y = 1,  0 ≤ x ≤ 0.75, y ≥ 0  →  x = 0.75, y = 0.25
  LpProblem p;
  p.sense = Sense::kMinimize;
  p.objective = (VectorXd(2) << 1, 2).finished();
  p.A_eq = to_sparse(MatrixXd::Ones(1, 2));
  p.b_eq = VectorXd::Ones(1);
  p.lower = VectorXd::Zero(2);
  p.upper = (VectorXd(2) << 0.75, std::numeric_limits<double>::infinity()).finished();
  const auto r = solver().solve_lp(p);
  ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
  EXPECT_NEAR(r.x[0], 0.75, 1e-7);
  EXPECT_NEAR(r.x[1], 0.25, 1e-7);
  EXPECT_NEAR(r.objective, 1.25, 1e-7);
}

// Random bounded polytopes: the two backends agree, the optimum is primal
// feasible and complementary slackness holds.
TEST_P(LpBackends, RandomCorpusAgreesWithSimplexAndSatisfiesKkt) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  const DenseSimplexSolver reference;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    const int m = n + 3 + trial % 7;
    MatrixXd A(m + 2 * n, n);
    VectorXd b(m + 2 * n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
      b[i] = unif(rng);
    }
    A.bottomRows(2 * n) << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
    b.tail(2 * n).setConstant(5.0);
    VectorXd c(n);
    for (int j = 0; j < n; ++j) c[j] = gauss(rng);
    const auto problem = lp(trial % 2 ? Sense::kMaximize : Sense::kMinimize, c, A, b);

    const auto r = solver().solve_lp(problem);
    const auto ref = reference.solve_lp(problem);
    ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
    ASSERT_EQ(ref.status, SolveStatus::kOptimal);
    EXPECT_NEAR(r.objective, ref.objective, 1e-7 * (1.0 + std::abs(ref.objective)));

    const VectorXd slack = b - A * r.x;
    EXPECT_GE(slack.minCoeff(), -1e-7);
    ASSERT_EQ(r.ineq_duals.size(), A.rows());
    EXPECT_GE(r.ineq_duals.minCoeff(), -1e-7);
    EXPECT_LE(r.ineq_duals.cwiseProduct(slack).cwiseAbs().maxCoeff(), 1e-6);
    const double sgn = problem.sense == Sense::kMaximize ? -1.0 : 1.0;
    EXPECT_LE((sgn * c + A.transpose() * r.ineq_duals).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST_P(LpBackends, Deterministic) {
  MatrixXd A(3, 2);
  A << 1, 1, -1, 0, 0, -1;
  const auto p = lp(Sense::kMaximize, (VectorXd(2) << 1, 0.5).finished(), A, (VectorXd(3) << 1, 0, 0).finished());
  const auto first = solver().solve_lp(p);
  for (int i = 0; i < 5; ++i) {
    const auto again = solver().solve_lp(p);
    EXPECT_EQ(again.status, first.status);
    EXPECT_NEAR(again.objective, first.objective, 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(AllBackends, LpBackends, ::testing::Values(0, 1, 2));

TEST(LpProblem, RejectsInconsistentDimensions) {
  LpProblem p;
  p.objective = VectorXd::Ones(2);
  p.A_ineq = to_sparse(MatrixXd::Ones(1, 3));
  p.b_ineq = VectorXd::Ones(1);
  EXPECT_THROW(p.validate(), Error);
  p.A_ineq = to_sparse(MatrixXd::Ones(1, 2));
  p.b_ineq = VectorXd::Constant(1, std::nan(""));
  EXPECT_THROW(p.validate(), Error);
}

QpProblem scalar_qp() {
  QpProblem p;
  p.P = to_sparse(MatrixXd::Constant(1, 1, 2.0));
  p.q = VectorXd::Zero(1);
  return p;
}

TEST(Qp, ActiveLowerBound) {
  // min x²  s.t.  x ≥ 1
  QpProblem p = scalar_qp();
  p.A_ineq = to_sparse(-MatrixXd::Ones(1, 1));
  p.b_ineq = -VectorXd::Ones(1);
  const auto r = solve_qp(p);
  ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
  EXPECT_NEAR(r.x[0], 1.0, 1e-8);
  EXPECT_NEAR(r.objective, 1.0, 1e-6);
}

TEST(Qp, Unconstrained) {
  const auto r = solve_qp(scalar_qp());
  ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
  EXPECT_NEAR(r.x[0], 0.0, 1e-10);
}

TEST(Qp, ProjectionOntoHalfspace) {
  // min (x-2)² + (y-2)²  s.t.  x + y ≤ 2  →  (1, 1)
  QpProblem p;
  p.P = to_sparse(2.0 * MatrixXd::Identity(2, 2));
  p.q = VectorXd::Constant(2, -4.0);
  p.A_ineq = to_sparse(MatrixXd::Ones(1, 2));
  p.b_ineq = VectorXd::Constant(1, 2.0);
  const auto r = solve_qp(p);
  ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
  EXPECT_NEAR(r.x[0], 1.0, 1e-8);
  EXPECT_NEAR(r.x[1], 1.0, 1e-8);
  // ½xᵀPx + qᵀx = 2 - 8 = -6 (the constant 8 is dropped)
  EXPECT_NEAR(r.objective, -6.0, 1e-6);
}

TEST(Qp, InfeasibleEqualityAndInequality) {
  QpProblem p = scalar_qp();
  p.A_eq = to_sparse(MatrixXd::Ones(1, 1));
  p.b_eq = VectorXd::Constant(1, 2.0);
  p.A_ineq = to_sparse(MatrixXd::Ones(1, 1));
  p.b_ineq = VectorXd::Constant(1, 1.0);
  EXPECT_EQ(solve_qp(p).status, SolveStatus::kInfeasible);
}

TEST(Qp, SemidefiniteCostAccepted) {
  // min x² (y free in cost) s.t. y ≤ 1, -y ≤ 1
  QpProblem p;
  MatrixXd P = MatrixXd::Zero(2, 2);
  P(0, 0) = 2.0;
  p.P = to_sparse(P);
  p.q = (VectorXd(2) << 0, -1).finished();
  MatrixXd A(2, 2);
  A << 0, 1, 0, -1;
  p.A_ineq = to_sparse(A);
  p.b_ineq = VectorXd::Ones(2);
  const auto r = solve_qp(p);
  ASSERT_EQ(r.status, SolveStatus::kOptimal) << r.detail;
  EXPECT_NEAR(r.x[1], 1.0, 1e-8);
}

TEST(Qp, RejectsIndefiniteOrAsymmetricCost) {
  QpProblem p;
  MatrixXd P(2, 2);
  P << 1, 0, 0, -1;
  p.P = to_sparse(P);
  p.q = VectorXd::Zero(2);
  EXPECT_THROW(p.validate(), Error);
  P << 1, 0.5, 0, 1;
  p.P = to_sparse(P);
  EXPECT_THROW(p.validate(), Error);
}

TEST(Qp, LargeSparseProblemMatchesDensePath) {
  // Chain of coupled variables; the dense and sparse KKT paths must agree.
  const int n = 400;
  MatrixXd P = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    P(i, i) = 2.0;
    if (i + 1 < n) P(i, i + 1) = P(i + 1, i) = -0.5;
  }
  QpProblem p;
  p.P = to_sparse(P);
  p.q = VectorXd::LinSpaced(n, -1.0, 1.0);
  p.A_ineq = to_sparse(MatrixXd::Identity(n, n));
  p.b_ineq = VectorXd::Constant(n, 0.1);
  InteriorPointOptions sparse_opts;
  sparse_opts.dense_threshold = 0;
  InteriorPointOptions dense_opts;
  dense_opts.dense_threshold = 10000;
  const auto a = InteriorPointSolver(sparse_opts).solve_qp(p);
  const auto b = InteriorPointSolver(dense_opts).solve_qp(p);
  ASSERT_TRUE(a.optimal()) << a.detail;
  ASSERT_TRUE(b.optimal()) << b.detail;
  EXPECT_LE((a.x - b.x).lpNorm<Eigen::Infinity>(), 1e-7);
}

}  // namespace
}  // namespace tubempc::solver
