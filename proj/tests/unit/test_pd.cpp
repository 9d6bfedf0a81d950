#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "msplit/driver.hpp"
#include "msplit/pd.hpp"
#include "msplit/problems.hpp"
#include "test_util.hpp"

using namespace msplit;

namespace {

PDParams scaled_params(const CompositeProblem& p, double scale, double eps = 1e-2) {
  PDParams params;
  params.primal_metrics = MetricSequence::constant(Metric::scaled_identity(p.dim(), scale));
  for (const auto& blk : p.blocks) {
    params.dual_metrics.push_back(MetricSequence::constant(Metric::scaled_identity(blk.b.dim, scale)));
  }
  params.epsilon = eps;
  return params;
}

StopRule tight(std::size_t max_iter = 100000) {
  StopRule s;
  s.residual_tol = 1e-12;
  s.relative_to_x0 = false;
  s.max_iter = max_iter;
  return s;
}

StopRule fixed(std::size_t iters) {
  StopRule s;
  s.residual_tol.reset();
  s.max_iter = iters;
  return s;
}

ProblemInstance fused() { return make_instance("fused_toy"); }

}  // namespace

TEST(ComputeDelta, UnitNormGivesZero) {
  const Metric id = Metric::identity(1);
  EXPECT_NEAR(compute_delta(id, {id}, {LinearMap::identity(1)}), 0.0, 1e-15);
}

TEST(ComputeDelta, QuarterMetricsGiveThree) {
  const Metric q = Metric::scaled_identity(1, 0.25);
  EXPECT_NEAR(compute_delta(q, {q}, {LinearMap::identity(1)}), 3.0, 1e-14);
}

TEST(ComputeDelta, TwoBlocksUnscaledIsNegative) {
  const Metric id = Metric::identity(1);
  const double d = compute_delta(id, {id, id}, {LinearMap::identity(1), LinearMap::identity(1)});
  EXPECT_NEAR(d, 1.0 / std::sqrt(2.0) - 1.0, 1e-15);
  EXPECT_LT(d, 0.0);
}

TEST(ComputeDelta, DenseMetricMatchesSpectralNorm) {
  const Matrix um = testutil::random_spd(3, 5, 0.1, 0.4);
  const Matrix dm = testutil::random_spd(2, 6, 0.1, 0.4);
  std::mt19937_64 rng(2);
  const Matrix l = testutil::gaussian(2, 3, rng);
  // ||sqrt(U1) L sqrt(U)||^2 is the largest eigenvalue of sqrt(U) L^T U1 L sqrt(U),
  // which has the same spectrum as U L^T U1 L.
  const Matrix prod = um * l.transpose() * dm * l;
  const double top = Eigen::EigenSolver<Matrix>(prod).eigenvalues().real().maxCoeff();
  const double expect = 1.0 / std::sqrt(top) - 1.0;
  EXPECT_NEAR(compute_delta(Metric::dense(um), {Metric::dense(dm)}, {LinearMap::from_matrix(l)}), expect, 1e-10);
}

TEST(ComputeDelta, AllZeroMapsRejected) {
  const Metric id = Metric::identity(2);
  EXPECT_THROW(compute_delta(id, {id}, {LinearMap::from_matrix(Matrix::Zero(2, 2))}), Error);
}

TEST(ComputeZeta, Examples) {
  EXPECT_DOUBLE_EQ(compute_zeta(3.0, {1.0}, ZetaVariant::delta_numerator), 0.75);
  EXPECT_DOUBLE_EQ(compute_zeta(3.0, {1.0}, ZetaVariant::as_printed), 1.0);
  EXPECT_DOUBLE_EQ(compute_zeta(1.0, {2.0, 0.5}, ZetaVariant::delta_numerator), 0.25);
}

TEST(ComputeZeta, NonpositiveDeltaRejected) {
  try {
    compute_zeta(0.0, {1.0}, ZetaVariant::delta_numerator);
    FAIL();
  } catch (const ParameterWindowError& e) {
    EXPECT_EQ(e.window(), "delta nonpositive");
  }
  EXPECT_DOUBLE_EQ(compute_zeta(-0.2, {2.0}, ZetaVariant::as_printed), 0.5);
}

TEST(ValidatePd, TwoUnscaledBlocksFlagDelta) {
  ProblemInstance inst = make_trivial_pd();
  CompositeProblem p = *inst.pd;
  p.blocks.push_back(p.blocks.front());
  const ValidationReport rep = validate_pd(p, scaled_params(p, 1.0), 4);
  EXPECT_TRUE(rep.has("delta nonpositive"));
  EXPECT_EQ(rep.first_n("delta nonpositive"), std::optional<std::size_t>(0));
}

TEST(ValidatePd, DecreasingMetricFlagged) {
  const ProblemInstance inst = make_trivial_pd();
  const CompositeProblem& p = *inst.pd;
  PDParams params = scaled_params(p, 0.25);
  params.primal_metrics =
      MetricSequence({Metric::scaled_identity(1, 0.25), Metric::scaled_identity(1, 0.2)});
  EXPECT_TRUE(validate_pd(p, params, 5).has("metric ordering"));
}

TEST(ValidatePd, LambdaAboveWindowFlagged) {
  const ProblemInstance inst = make_trivial_pd();
  const CompositeProblem& p = *inst.pd;
  PDParams params = scaled_params(p, 0.25);
  const PDStep s = pd_step_parameters(p, params, 0);
  params.lambda_at = constant_seq(s.lambda_top + 0.01);
  const ValidationReport rep = validate_pd(p, params, 3);
  EXPECT_TRUE(rep.has("lambda window"));
  EXPECT_THROW(solve_pd(p, params, inst.x0, inst.v0, fixed(3)), ParameterWindowError);
}

TEST(PdStep, TrivialInstanceParameters) {
  const ProblemInstance inst = make_trivial_pd();
  const CompositeProblem& p = *inst.pd;
  const PDParams params = scaled_params(p, 0.25);
  const PDStep s = pd_step_parameters(p, params, 0);
  EXPECT_NEAR(s.delta, 3.0, 1e-14);
  EXPECT_NEAR(s.zeta, 3.0, 1e-14);
  EXPECT_NEAR(s.lambda_top, 1.0 + 0.99 * (1.0 - 1.0 / 6.0), 1e-14);
  EXPECT_NEAR(s.lambda, 0.5 * (0.01 + s.lambda_top), 1e-14);
  EXPECT_NEAR(s.phi, 2.0 / (4.0 - 1.0 / 3.0), 1e-14);
}

TEST(SolvePd, TrivialInstanceStaysAtSaddlePoint) {
  const ProblemInstance inst = make_trivial_pd();
  const CompositeProblem& p = *inst.pd;
  const PDResult r = solve_pd(p, scaled_params(p, 0.25), inst.x0, inst.v0, fixed(5));
  EXPECT_EQ(r.x_final(0), 0.0);
  EXPECT_EQ(r.v_final[0](0), 0.0);
  EXPECT_EQ(r.final_kkt.max(), 0.0);
}

TEST(SolvePd, TrivialInstanceConvergesFromElsewhere) {
  const ProblemInstance inst = make_trivial_pd();
  const CompositeProblem& p = *inst.pd;
  const PDResult r = solve_pd(p, scaled_params(p, 0.25), Vector::Constant(1, 3.0), {Vector::Constant(1, -2.0)},
                              tight());
  EXPECT_LE(std::abs(r.x_final(0)), 1e-10);
  EXPECT_LE(std::abs(r.v_final[0](0)), 1e-10);
}

TEST(SolvePd, FusedToyMatchesOracle) {
  const ProblemInstance inst = fused();
  const CompositeProblem& p = *inst.pd;
  const PDResult r = solve_pd(p, scaled_params(p, 0.3), inst.x0, inst.v0, tight());
  EXPECT_TRUE(r.validation.passed()) << r.validation;
  EXPECT_EQ(r.trace.reason, StopReason::residual);
  EXPECT_LE((r.x_final - inst.solution).lpNorm<Eigen::Infinity>(), 1e-5);
  EXPECT_LE((r.v_final[0] - inst.dual_solution[0]).lpNorm<Eigen::Infinity>(), 1e-5);
  EXPECT_LE(r.final_kkt.max(), 1e-8);
  EXPECT_EQ(r.trace.extra_columns.size(), 2u);
}

TEST(SolvePd, KktResidualsDecreaseAlongTrace) {
  const ProblemInstance inst = fused();
  const CompositeProblem& p = *inst.pd;
  const PDResult r = solve_pd(p, scaled_params(p, 0.3), inst.x0, inst.v0, tight());
  const auto& recs = r.trace.records;
  ASSERT_GT(recs.size(), 20u);
  EXPECT_GT(recs.front().extra[0] + recs.front().extra[1], 1e-3);
  EXPECT_LE(recs.back().extra[0], 1e-8);
  EXPECT_LE(recs.back().extra[1], 1e-8);
}

TEST(SolvePd, StepsSatisfyProductSpaceMembership) {
  const ProblemInstance inst = fused();
  const CompositeProblem& p = *inst.pd;
  const PDParams params = scaled_params(p, 0.3);
  RunOptions opts;
  opts.store_iterates = true;
  const PDResult r = solve_pd(p, params, inst.x0, inst.v0, fixed(40), opts);
  const Metric u = params.primal_metrics.at(0);
  const std::vector<Metric> duals{params.dual_metrics[0].at(0)};
  for (std::size_t n = 0; n < 40; n += 4) {
    const auto& rec = r.trace.records[n];
    for (double res : product::membership_residuals(p, u, duals, rec.x, rec.y)) EXPECT_LE(res, 1e-10) << n;
    EXPECT_LE((product::fb_map(p, u, duals, rec.x) - rec.y).norm(), 1e-10) << n;
  }
}

TEST(SolvePd, MembershipDetectsWrongStep) {
  const ProblemInstance inst = fused();
  const CompositeProblem& p = *inst.pd;
  const PDParams params = scaled_params(p, 0.3);
  const Metric u = params.primal_metrics.at(0);
  const std::vector<Metric> duals{params.dual_metrics[0].at(0)};
  std::mt19937_64 rng(4);
  const Vector xt = product::pack(testutil::gaussian(12, rng), {testutil::gaussian(11, rng)});
  Vector yt = product::fb_map(p, u, duals, xt);
  yt(0) += 0.05;
  const auto res = product::membership_residuals(p, u, duals, xt, yt);
  EXPECT_GT(std::max(res[0], res[1]), 1e-3);
}

TEST(SolvePd, OneIterationEqualsDriverOnProductMap) {
  const ProblemInstance inst = fused();
  const CompositeProblem& p = *inst.pd;
  const PDParams params = scaled_params(p, 0.3);
  std::mt19937_64 rng(8);
  const Vector x0 = testutil::gaussian(12, rng);
  const std::vector<Vector> v0{testutil::gaussian(11, rng)};
  const PDResult r = solve_pd(p, params, x0, v0, fixed(1));
  const PDStep step = pd_step_parameters(p, params, 0);

  const Metric u = params.primal_metrics.at(0);
  const std::vector<Metric> duals{params.dual_metrics[0].at(0)};
  // The driver measures in the U^{-1} norm, so its metric is V^{-1}.
  const Matrix vinv = product::v_tilde(p, u, duals).inverse();
  OperatorSchedule s;
  s.m = 1;
  s.metrics = MetricSequence::constant(Metric::dense(Matrix(0.5 * (vinv + vinv.transpose()))));
  s.epsilon = params.epsilon;
  s.lambda_at = constant_seq(step.lambda);
  s.factors_at = [&](std::size_t) {
    return std::vector<AveragedMap>{{23, [&](const Vector& xt) { return product::fb_map(p, u, duals, xt); },
                                     step.phi, s.metrics.at(0), "fb"}};
  };
  const IterationTrace t = iterate(s, product::pack(x0, v0), fixed(1));
  EXPECT_LE((t.x_final - r.trace.x_final).norm(), 1e-10);
}

TEST(SolvePd, FejerInProductMetric) {
  const ProblemInstance inst = fused();
  const CompositeProblem& p = *inst.pd;
  RunOptions opts;
  opts.reference = product::pack(inst.solution, inst.dual_solution);
  const PDResult r = solve_pd(p, scaled_params(p, 0.3), inst.x0, inst.v0, tight(3000), opts);
  EXPECT_TRUE(fejer_monitor(r.trace, 1e-8).monotone);
}

TEST(SolvePd, NonAdjointPairRejectedBeforeRun) {
  const ProblemInstance inst = fused();
  CompositeProblem p = *inst.pd;
  std::mt19937_64 rng(12);
  Matrix l = p.blocks[0].l.to_dense();
  LinearMap bad = LinearMap::from_matrix(l);
  const Matrix wrong = l.transpose() + 1e-3 * testutil::gaussian(12, 11, rng);
  bad.adjoint = [wrong](const Vector& v) { return Vector(wrong * v); };
  p.blocks[0].l = bad;
  EXPECT_TRUE(validate_problem(p).has("adjoint"));
  try {
    solve_pd(p, scaled_params(p, 0.3), inst.x0, inst.v0, fixed(5));
    FAIL();
  } catch (const ParameterWindowError& e) {
    EXPECT_EQ(e.window(), "adjoint");
  }
}

TEST(PdResiduals, ZeroAtTrivialSaddle) {
  const ProblemInstance inst = make_trivial_pd();
  const KKTReport k = pd_residuals(*inst.pd, inst.x0, inst.v0);
  EXPECT_EQ(k.primal, 0.0);
  EXPECT_EQ(k.dual.at(0), 0.0);
}

TEST(PdResiduals, SmallAtFusedOracle) {
  const ProblemInstance inst = fused();
  EXPECT_LE(pd_residuals(*inst.pd, inst.solution, inst.dual_solution).max(), 1e-6);
}

TEST(PdResiduals, LargeFarFromSolution) {
  const ProblemInstance inst = fused();
  std::mt19937_64 rng(21);
  const Vector x = Vector::Constant(12, 3.0) + testutil::gaussian(12, rng);
  const Vector v = 4.0 * testutil::gaussian(11, rng);
  const KKTReport k = pd_residuals(*inst.pd, x, {v});
  EXPECT_GT(k.primal, 0.1);
  EXPECT_GT(k.dual.at(0), 0.1);
}
