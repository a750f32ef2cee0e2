#include "qmp/solver.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "qmp/random.hpp"
#include "test_util.hpp"

using namespace qmp;
using namespace qmp::testutil;

TEST(Dispatch, UnconstrainedMatchesClosedSolver) {
  Rng rng(601);
  QMPProblem p = unconstrained_t2(rng, 4, 2);
  QMPSolution sol = solve(p);
  EXPECT_EQ(sol.path, SolvePath::ClosedForm);
  CMatrix direct = solve_unconstrained(p.objective.A, p.objective.B);
  EXPECT_LE(frobenius_norm(sol.x - direct), 1e-12);
  EXPECT_EQ(sol.lower_bound, sol.objective);
}

TEST(Dispatch, SingleTraceGoesBisection) {
  Rng rng(602);
  QMPProblem p = single_trace(rng, 3, 2, 0.5);
  QMPSolution sol = solve(p);
  EXPECT_EQ(sol.path, SolvePath::Bisection);
  EXPECT_LE(sol.feasibility_violation, 1e-8);
}

TEST(Dispatch, GeneralType2GoesHomogenized) {
  Rng rng(603);
  QMPProblem p = general_t2(rng, 2, 2, 1, 0);
  EXPECT_EQ(classify(p).tag, ProblemTag::General);
  QMPSolution sol = solve(p);
  EXPECT_EQ(sol.path, SolvePath::HomogenizedT2);
}

TEST(Dispatch, ForcedClosedFormRejectsConstraints) {
  Rng rng(604);
  QMPProblem p = single_trace(rng, 2, 1, 1.0);
  SolveSettings s;
  s.force_path = SolvePath::ClosedForm;
  EXPECT_THROW(solve(p, s), ValidationError);
}

TEST(Dispatch, DiagnosticsLineEmitted) {
  Rng rng(605);
  QMPProblem p = unconstrained_t2(rng, 2, 1);
  std::ostringstream oss;
  SolveSettings s;
  s.diagnostics = &oss;
  solve(p, s);
  EXPECT_NE(oss.str().find("path=CLOSED_FORM"), std::string::npos);
}

// Cross-path oracle: the single-constraint instance is solvable both by the
// KKT bisection and by the homogenized relaxation (1 constraint < 2r, tight).
TEST(CrossPath, BisectionVsHomogenized) {
  Rng rng(606);
  for (int trial = 0; trial < 5; ++trial) {
    QMPProblem p = single_trace(rng, 3, 2, 0.4);
    QMPSolution bis = solve(p);
    ASSERT_EQ(bis.path, SolvePath::Bisection);
    SolveSettings s;
    s.force_path = SolvePath::HomogenizedT2;
    QMPSolution hom = solve(p, s);
    const double scale = std::max(1.0, std::abs(bis.objective));
    EXPECT_LE(std::abs(hom.objective - bis.objective), 1e-4 * scale);
    EXPECT_LE(hom.recovery_rank_gap, 1e-5);
    EXPECT_LE(hom.lower_bound, hom.objective + 1e-6 * scale);
  }
}

TEST(CrossPath, ScalarEqualityInstance) {
  // min |x|^2 - 4 Re x + 4  s.t. |x|^2 = 1: optimum x = 1, objective 1.
  QMPProblem p = scalar_problem(1.0, cplx(-2.0, 0.0), 4.0);
  p.equalities.push_back(scalar_fn(1.0, 0.0, -1.0));
  QMPSolution hom = solve(p);
  EXPECT_EQ(hom.path, SolvePath::HomogenizedT2);
  EXPECT_NEAR(hom.objective, 1.0, 1e-5);
  EXPECT_NEAR(hom.x(0, 0).real(), 1.0, 1e-4);

  SolveSettings s;
  s.force_path = SolvePath::SdrGeneral;
  QMPSolution sdr = solve(p, s);
  EXPECT_NEAR(sdr.objective, 1.0, 1e-5);
}

// ---------------------------------------------------------------------------

TEST(BuildSdr, ScalarUnconstrainedBoundIsExact) {
  // min a|x|^2 + 2 Re(conj(b) x) + c has optimum c - |b|^2/a for a > 0; the
  // SDR bound with only the corner constraint matches it.
  const double a = 2.0, c = 0.7;
  const cplx b(0.8, -0.4);
  QMPProblem p = scalar_problem(a, b, c);
  SdrRelaxation rel = build_sdr(p);
  ConeSolution sol = solve_sdp(rel.embedding.program);
  ASSERT_EQ(sol.status, ConeStatus::Optimal);
  const double exact = c - std::norm(b) / a;
  EXPECT_NEAR(sol.objective, exact, 1e-6 * std::max(1.0, std::abs(exact)));
}

TEST(BuildSdr, BoundBelowFeasiblePoints) {
  Rng rng(607);
  for (int trial = 0; trial < 5; ++trial) {
    QMPProblem p = general_t2(rng, 2, 1, 0, 0);
    SdrRelaxation rel = build_sdr(p);
    ConeSolution sol = solve_sdp(rel.embedding.program);
    ASSERT_EQ(sol.status, ConeStatus::Optimal);
    // random feasible points: scale into the trace cap
    for (int k = 0; k < 10; ++k) {
      CMatrix x = rng.gaussian(2, 1);
      const auto& cap = p.inequalities.front();
      const double q = trace(adjoint(x) * cap.A * x).real();
      const double smax = std::sqrt(std::max(0.0, -cap.c) / std::max(q, 1e-12));
      x *= std::min(1.0, 0.99 * smax);
      EXPECT_LE(sol.objective, evaluate(p.objective, x) + 1e-6);
    }
  }
}

TEST(RecoverRank1, ExactRoundTrip) {
  Rng rng(608);
  CMatrix x = rng.gaussian(2, 2);
  const std::size_t dim = 5;
  CMatrix w(dim, 1);
  CMatrix vx = vec(x);
  for (std::size_t i = 0; i < 4; ++i) w(i, 0) = vx(i, 0);
  w(4, 0) = 1.0;
  CMatrix z = w * adjoint(w);
  Rank1Recovery rec = recover_rank1(z, 2, 2);
  EXPECT_LE(frobenius_norm(rec.x - x), 1e-9 * std::max(1.0, frobenius_norm(x)));
  EXPECT_LE(rec.rank_gap, 1e-12);
}

TEST(RecoverRank1, TieBreakPicksLargestLastEntry) {
  CMatrix z = CMatrix::identity(2);  // n = r = 1, eigenvalues tied
  Rank1Recovery rec = recover_rank1(z, 1, 1);
  EXPECT_NEAR(std::abs(rec.x(0, 0)), 0.0, 1e-12);
  EXPECT_NEAR(rec.rank_gap, 1.0, 1e-12);
}

TEST(RecoverRank1, PlantedPerturbation) {
  Rng rng(609);
  CMatrix x = rng.gaussian(2, 2);
  CMatrix w(5, 1);
  CMatrix vx = vec(x);
  for (std::size_t i = 0; i < 4; ++i) w(i, 0) = vx(i, 0);
  w(4, 0) = 1.0;
  CMatrix z = w * adjoint(w) + 1e-6 * hermitian_part(rng.pd(5));
  z(4, 4) = 1.0;  // corner stays pinned in the relaxation
  Rank1Recovery rec = recover_rank1(z, 2, 2);
  EXPECT_LE(frobenius_norm(rec.x - x), 1e-4 * std::max(1.0, frobenius_norm(x)));
}

TEST(RecoverRank1, CornerMustBeOne) {
  CMatrix z = 2.0 * CMatrix::identity(2);
  EXPECT_THROW(recover_rank1(z, 1, 1), ValidationError);
}

// ---------------------------------------------------------------------------

TEST(ConvexSchur, UnconstrainedMatchesClosedForm) {
  Rng rng(610);
  for (int trial = 0; trial < 3; ++trial) {
    QMPProblem p = unconstrained_t2(rng, 2, 2);
    SolveSettings s;
    s.force_path = SolvePath::ConvexSdp;
    QMPSolution sdp = solve(p, s);
    QMPSolution cf = solve(p);
    const double scale = std::max(1.0, std::abs(cf.objective));
    EXPECT_LE(std::abs(sdp.objective - cf.objective), 1e-6 * scale);
    EXPECT_LE(sdp.lower_bound, sdp.objective + 1e-6 * scale);
  }
}

TEST(ConvexSchur, SingleTraceMatchesBisection) {
  Rng rng(611);
  for (int trial = 0; trial < 3; ++trial) {
    QMPProblem p = single_trace(rng, 2, 2, 0.3);
    QMPSolution bis = solve(p);
    SolveSettings s;
    s.force_path = SolvePath::ConvexSdp;
    QMPSolution sdp = solve(p, s);
    EXPECT_LE(std::abs(sdp.objective - bis.objective),
              1e-4 * std::max(1.0, std::abs(bis.objective)));
  }
}

TEST(ConvexSchur, GeneralConvexFeasible) {
  Rng rng(612);
  QMPProblem p;
  p.n = 2;
  p.r = 2;
  p.objective = QMFunction::make(rng.pd(2), rng.gaussian(2, 2), 0.3, rng.pd(2));
  p.inequalities.push_back(QMFunction::make(rng.pd(2), CMatrix(2, 2), -2.0, rng.pd(2)));
  ASSERT_EQ(classify(p).tag, ProblemTag::Convex);
  QMPSolution sol = solve(p);
  EXPECT_EQ(sol.path, SolvePath::ConvexSdp);
  EXPECT_LE(sol.feasibility_violation, 1e-6);
}

TEST(ConvexSocp, UnconstrainedMatchesClosedForm) {
  Rng rng(613);
  for (int trial = 0; trial < 3; ++trial) {
    QMPProblem p = unconstrained_t2(rng, 2, 2);
    SolveSettings s;
    s.force_path = SolvePath::ConvexSocp;
    QMPSolution socp = solve(p, s);
    QMPSolution cf = solve(p);
    const double scale = std::max(1.0, std::abs(cf.objective));
    EXPECT_LE(std::abs(socp.objective - cf.objective), 1e-6 * scale);
  }
}

TEST(ConvexSocp, MatchesSchurOnConstrained) {
  Rng rng(614);
  for (int trial = 0; trial < 3; ++trial) {
    QMPProblem p = single_trace(rng, 2, 2, 0.4);
    SolveSettings s1;
    s1.force_path = SolvePath::ConvexSdp;
    SolveSettings s2;
    s2.force_path = SolvePath::ConvexSocp;
    QMPSolution a = solve(p, s1);
    QMPSolution b = solve(p, s2);
    EXPECT_LE(std::abs(a.objective - b.objective),
              1e-5 * std::max(1.0, std::abs(a.objective)));
  }
}

TEST(ConvexSocp, ZeroLinearTermReduction) {
  Rng rng(615);
  QMPProblem p;
  p.n = 2;
  p.r = 1;
  p.objective = QMFunction::type2(rng.pd(2), CMatrix(2, 1), 0.0);
  p.inequalities.push_back(QMFunction::type2(rng.pd(2), CMatrix(2, 1), -1.0));
  SolveSettings s;
  s.force_path = SolvePath::ConvexSocp;
  QMPSolution sol = solve(p, s);
  // With B = 0 everywhere the optimum is X = 0 with objective c_0 = 0.
  EXPECT_NEAR(sol.objective, 0.0, 1e-6);
  EXPECT_LE(frobenius_norm(sol.x), 1e-3);
}

TEST(ConvexSocp, InfeasibleConstraintReportedBeforeSolving) {
  Rng rng(616);
  QMPProblem p;
  p.n = 2;
  p.r = 1;
  p.objective = QMFunction::type2(rng.pd(2), rng.gaussian(2, 1), 0.0);
  // Tr(X^H A X) + 1 <= 0 with A > 0 and B = 0 cannot hold.
  p.inequalities.push_back(QMFunction::type2(rng.pd(2), CMatrix(2, 1), 1.0));
  EXPECT_THROW(build_convex_socp(p), InfeasibleError);
}

TEST(ConvexSocp, RequiresStrictDefiniteness) {
  Rng rng(617);
  QMPProblem p = unconstrained_t2(rng, 2, 1);
  p.objective.A(0, 0) = 0.0;
  p.objective.A(0, 1) = 0.0;
  p.objective.A(1, 0) = 0.0;  // singular PSD now
  p.objective.A(1, 1) = 1.0;
  EXPECT_THROW(build_convex_socp(p), NotPsdError);
}

// ---------------------------------------------------------------------------

TEST(Homogenized, UnconstrainedMatchesClosedForm) {
  Rng rng(618);
  for (int trial = 0; trial < 3; ++trial) {
    QMPProblem p = unconstrained_t2(rng, 3, 2);
    SolveSettings s;
    s.force_path = SolvePath::HomogenizedT2;
    QMPSolution hom = solve(p, s);
    QMPSolution cf = solve(p);
    EXPECT_LE(std::abs(hom.objective - cf.objective),
              1e-6 * std::max(1.0, std::abs(cf.objective)));
  }
}

TEST(Homogenized, TwoTraceConstraintsTight) {
  Rng rng(619);
  for (int trial = 0; trial < 4; ++trial) {
    QMPProblem p = general_t2(rng, 3, 2, 1, 0);  // 2 constraints < 2r = 4
    QMPSolution hom = solve(p);
    ASSERT_EQ(hom.path, SolvePath::HomogenizedT2);
    EXPECT_LE(hom.feasibility_violation, 1e-6);
    const double scale = std::max(1.0, std::abs(hom.lower_bound));
    EXPECT_LE(hom.objective - hom.lower_bound, 1e-4 * scale);
    EXPECT_LE(hom.recovery_rank_gap, 1e-4);
  }
}

// Tightness sweep: |I| + |E| < 2r implies the relaxation closes the gap.
TEST(Homogenized, TightnessProperty) {
  Rng rng(620);
  int checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t r = 2;
    const std::size_t n = 2 + trial % 2;
    const std::size_t extra = trial % 3;  // 1..3 constraints total < 4
    QMPProblem p = general_t2(rng, n, r, extra, 0);
    QMPSolution hom = solve(p);
    const double scale = std::max(1.0, std::abs(hom.lower_bound));
    EXPECT_LE(hom.recovery_rank_gap, 1e-4) << "trial " << trial;
    EXPECT_LE(hom.objective - hom.lower_bound, 1e-4 * scale) << "trial " << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 12);
}

TEST(LowerBound, HoldsAcrossPaths) {
  Rng rng(621);
  for (int trial = 0; trial < 6; ++trial) {
    QMPProblem p = single_trace(rng, 2, 2, 0.5);
    for (SolvePath path : {SolvePath::Bisection, SolvePath::ConvexSdp,
                           SolvePath::ConvexSocp, SolvePath::HomogenizedT2}) {
      SolveSettings s;
      s.force_path = path;
      QMPSolution sol = solve(p, s);
      EXPECT_LE(sol.lower_bound,
                sol.objective + 1e-8 * std::max(1.0, std::abs(sol.objective)))
          << to_string(path);
    }
  }
}

// Scalar sanity vs the grid oracle (the full sweep lives in acceptance).
TEST(ScalarGrid, NonconvexCappedInstance) {
  QMPProblem p = scalar_problem(-1.0, cplx(0.3, -0.2), 0.5);
  p.inequalities.push_back(scalar_fn(1.0, 0.0, -1.0));  // |x|^2 <= 1
  QMPSolution sol = solve(p);  // type-2, general -> homogenized
  auto grid = testutil::scalar_grid_search(p, 2.0);
  ASSERT_TRUE(grid.found);
  EXPECT_NEAR(sol.objective, grid.objective, 1e-3);
}

TEST(ScalarGrid, ConvexInstanceAllPaths) {
  QMPProblem p = scalar_problem(1.5, cplx(-0.7, 0.4), 0.2);
  p.inequalities.push_back(scalar_fn(1.0, 0.0, -0.25));  // |x|^2 <= 0.25
  auto grid = testutil::scalar_grid_search(p, 2.0);
  ASSERT_TRUE(grid.found);
  for (SolvePath path : {SolvePath::Bisection, SolvePath::ConvexSdp,
                         SolvePath::ConvexSocp, SolvePath::HomogenizedT2,
                         SolvePath::SdrGeneral}) {
    SolveSettings s;
    s.force_path = path;
    QMPSolution sol = solve(p, s);
    EXPECT_NEAR(sol.objective, grid.objective, 1e-3) << to_string(path);
  }
}
