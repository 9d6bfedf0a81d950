// Acceptance suite: one PASS/FAIL line per criterion. Tolerances, seeds and
// runtime limits are pinned below; a criterion passes only when its checks
// hold and it finishes inside its time limit.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "msplit/driver.hpp"
#include "msplit/fb.hpp"
#include "msplit/metric.hpp"
#include "msplit/operators.hpp"
#include "msplit/pd.hpp"
#include "msplit/problems.hpp"

#ifndef MSPLIT_CLI_PATH
#error "MSPLIT_CLI_PATH must point at the msplit executable"
#endif

using namespace msplit;

namespace {

// ------------------------------------------------------------------ pins

constexpr std::size_t kAveragedSamples = 1000;
constexpr double kAveragedTol = 1e-9;
constexpr double kGridTol = 1e-14;
constexpr int kGridSize = 50;
constexpr double kCauchyTol = 1e-10;
constexpr std::size_t kCauchyWindow = 100;
constexpr double kFejerSlack = 1e-10;
constexpr std::uint64_t kLassoSeed = 42;
constexpr double kLassoTauRatio = 0.1;
constexpr double kOracleLinf = 1e-6;
constexpr std::size_t kFbMaxIter = 100000;
// Only a runtime limit is attached to the extended-step run.
constexpr std::size_t kExtendedMaxIter = 5000000;
constexpr double kMembershipTol = 1e-10;
constexpr std::size_t kMembershipPoints = 10;
constexpr double kKktTol = 1e-6;
constexpr double kPdOracle = 1e-5;
constexpr std::size_t kPdMaxIter = 100000;

constexpr double kLimit1 = 5, kLimit2 = 1, kLimit3 = 5, kLimit4 = 30, kLimit5 = 30, kLimit6 = 5, kLimit7 = 60,
                 kLimit8 = 2, kLimit9 = 150;

// ------------------------------------------------------------------ plumbing

struct Outcome {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double linf(const Vector& a, const Vector& b) { return (a - b).lpNorm<Eigen::Infinity>(); }

std::string csv_of(const IterationTrace& t) {
  std::ostringstream os;
  write_trace_csv(os, t);
  return os.str();
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector gaussian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

Matrix random_spd(Index n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) g.col(i) = gaussian(n, rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  std::uniform_real_distribution<double> u(lo, hi);
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig(i) = u(rng);
  Matrix m = q * eig.asDiagonal() * q.transpose();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

Vector random_positive(Index n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

StopRule tight(std::size_t max_iter) {
  StopRule s;
  s.residual_tol = 1e-14;
  s.relative_to_x0 = false;
  s.max_iter = max_iter;
  return s;
}

ProblemInstance pinned_lasso() {
  return make_lasso(kLassoSeed, 5, 20, lasso_tau_from_ratio(kLassoSeed, 5, 20, kLassoTauRatio));
}

FBParams fb_params(const MetricSequence& ms, double gamma, double lambda, double eps) {
  FBParams p;
  p.metrics = ms;
  p.gamma_at = constant_seq(gamma);
  p.lambda_at = constant_seq(lambda);
  p.epsilon = eps;
  return p;
}

Metric jacobi(const Matrix& gram) {
  const Vector rows = gram.cwiseAbs().rowwise().sum();
  return Metric::diagonal(Vector(rows.minCoeff() * rows.cwiseInverse()));
}

int run_cli(const std::string& args, std::string& output) {
  const std::string cmd = std::string("'") + MSPLIT_CLI_PATH + "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
  const int status = ::pclose(pipe);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Traces of runs 3-7, kept for the determinism rerun.
struct Traces {
  std::vector<std::string> csv;
};

// ------------------------------------------------------------------ AC1

Outcome ac1() {
  Outcome o;
  double worst = std::numeric_limits<double>::infinity();
  auto expect = [&](const AveragedMap& t, std::uint64_t seed, const std::string& label) {
    const PropertyReport r = check_averaged(t, kAveragedSamples, kAveragedTol, seed);
    worst = std::min(worst, r.worst_margin);
    o.check(r.passed && r.worst_margin >= -kAveragedTol, label + " margin " + fmt(r.worst_margin));
  };
  const Index d = 6;
  std::mt19937_64 rng(101);
  const Metric id = Metric::identity(d);
  const Metric diag = Metric::diagonal(random_positive(d, 102, 0.2, 3.0));
  const Metric iso = Metric::scaled_identity(d, 2.5);
  const Metric dense = Metric::dense(random_spd(d, 103, 0.3, 2.5));

  const MonotoneOp l1 = make_prox_l1(d, 0.8);
  const MonotoneOp box = make_projection(Box{Vector::Constant(d, -0.5), Vector::Constant(d, 0.5)});
  const MonotoneOp half = make_projection(Halfspace{gaussian(d, rng), 0.3});
  const MonotoneOp ball = make_projection(Ball{gaussian(d, rng), 1.2});
  Matrix k(d, d);
  for (Index i = 0; i < d; ++i) k.col(i) = gaussian(d, rng);
  k = (k - k.transpose()).eval() + 0.5 * Matrix::Identity(d, d);
  const MonotoneOp lin = make_linear_monotone(k);

  expect(resolvent_map(l1, 1.0, id), 1, "l1/id");
  expect(resolvent_map(l1, 0.4, diag), 2, "l1/diag");
  expect(resolvent_map(box, 1.0, id), 3, "box/id");
  expect(resolvent_map(box, 2.0, diag), 4, "box/diag");
  expect(resolvent_map(half, 1.0, id), 5, "halfspace/id");
  expect(resolvent_map(half, 1.0, iso), 6, "halfspace/iso");
  expect(resolvent_map(ball, 1.0, id), 7, "ball/id");
  expect(resolvent_map(ball, 1.0, iso), 8, "ball/iso");
  expect(resolvent_map(lin, 0.7, id), 9, "linear/id");
  expect(resolvent_map(lin, 0.7, dense), 10, "linear/dense");

  const LassoData ld = lasso_data(kLassoSeed, 5, 20);
  const CocoerciveOp grad = make_quadratic_gradient(ld.m, ld.b);
  const Metric ldiag = Metric::diagonal(random_positive(20, 104, 0.3, 2.0));
  std::uint64_t seed = 20;
  for (double frac : {0.1, 0.5, 1.0, 1.5, 1.9}) {
    expect(forward_map(grad, frac * grad.beta, Metric::identity(20)), seed++, "forward/id " + fmt(frac));
    expect(forward_map(grad, frac * grad.beta / ldiag.norm_ub(), ldiag), seed++, "forward/diag " + fmt(frac));
  }
  const Matrix spd = random_spd(d, 105, 0.2, 4.0);
  const CocoerciveOp lingrad{d, [spd](const Vector& x) { return Vector(spd * x); },
                             1.0 / Eigen::SelfAdjointEigenSolver<Matrix>(spd).eigenvalues().maxCoeff(), "spd"};
  expect(forward_map(lingrad, 1.2 * lingrad.beta / dense.norm_ub(), dense), seed++, "forward/dense");
  o.note("worst margin " + fmt(worst) + " over 21 operators x " + std::to_string(kAveragedSamples) + " samples");
  return o;
}

// ------------------------------------------------------------------ AC2

Outcome ac2() {
  Outcome o;
  double worst = 0.0;
  for (int i = 0; i < kGridSize; ++i) {
    const double beta = std::pow(10.0, -3.0 + 6.0 * i / (kGridSize - 1));
    for (int j = 0; j < kGridSize; ++j) {
      const double a = (j + 0.5) / kGridSize;  // gamma ||U|| / (2 beta) in ]0, 1[
      const double u = 0.5 + i % 7;
      const double gamma = 2.0 * beta * a / u;
      const double direct = fb_phi(gamma, u, beta);
      const double composed = compose_constants({0.5, gamma * u / (2.0 * beta)});
      worst = std::max(worst, std::abs(direct - composed));
    }
  }
  o.check(worst <= kGridTol, "max deviation " + fmt(worst));
  if (o.ok) o.note("max deviation " + fmt(worst) + " on " + std::to_string(kGridSize * kGridSize) + " points");
  return o;
}

// ------------------------------------------------------------------ AC3

IterationTrace run3() {
  const ProblemInstance inst = make_two_halfspaces();
  OperatorSchedule s;
  s.m = 2;
  s.metrics = MetricSequence::constant(Metric::identity(2));
  s.epsilon = 0.1;
  const auto sets = inst.sets;
  s.factors_at = [sets](std::size_t) {
    return std::vector<AveragedMap>{resolvent_map(sets[0], 1.0, Metric::identity(2)),
                                    resolvent_map(sets[1], 1.0, Metric::identity(2))};
  };
  const double phi = compose_constants({0.5, 0.5});
  s.lambda_at = constant_seq(s.epsilon + (1.0 - s.epsilon) / phi);
  StopRule stop;
  stop.residual_tol.reset();
  stop.max_iter = 300;
  RunOptions opts;
  opts.reference = inst.solution;
  return iterate(s, inst.x0, stop, opts);
}

Outcome ac3(Traces& tr) {
  Outcome o;
  const IterationTrace t = run3();
  tr.csv.push_back(csv_of(t));
  o.check(t.validation.passed(), "schedule validation failed");
  SummabilityOptions so;
  so.tail_window = kCauchyWindow;
  so.cauchy_tol = kCauchyTol;
  const MonitorReport m = summability_monitor(t, so);
  o.check(m.tail_increment < kCauchyTol, "tail increment " + fmt(m.tail_increment));
  o.check(m.summable_consistent, "partial sums not Cauchy");
  const FejerReport f = fejer_monitor(t, kFejerSlack);
  o.check(f.monotone, "quasi-Fejer violated, worst increase " + fmt(f.worst_increase));
  if (o.ok) {
    o.note("lambda=" + fmt(t.records.front().lambda) + ", sum s_n=" + fmt(m.total) + ", tail increment " +
           fmt(m.tail_increment) + ", worst Fejer increase " + fmt(f.worst_increase));
  }
  return o;
}

// ------------------------------------------------------------------ AC4

struct FbRun {
  FBResult r;
  double dist = 0.0;
};

FbRun run4(char which) {
  const ProblemInstance inst = pinned_lasso();
  const FBProblem& p = *inst.fb;
  const double beta = p.b.beta;
  const double eps = 1e-2;
  FBParams params = fb_params(MetricSequence::constant(Metric::identity(20)), beta, 1.0, eps);
  if (which == 'b') {
    const Metric u = jacobi(*inst.gram);
    params = fb_params(MetricSequence::constant(u), beta, fb_lambda_top(beta, u.norm_ub(), beta, eps), eps);
  } else if (which == 'c') {
    params.a_at = geometric_seq(Vector::Constant(20, 0.1), 0.5);
    params.b_at = geometric_seq(Vector::Constant(20, -0.1), 0.5);
  }
  RunOptions opts;
  opts.store_iterates = false;
  FbRun out;
  out.r = solve_fb(p, params, inst.x0, tight(kFbMaxIter), opts);
  out.dist = linf(out.r.x_final, inst.solution);
  return out;
}

Outcome ac4(Traces& tr) {
  Outcome o;
  for (char which : {'a', 'b', 'c'}) {
    const FbRun run = run4(which);
    tr.csv.push_back(csv_of(run.r.trace));
    const std::string tag = std::string("(") + which + ") ";
    o.check(run.dist <= kOracleLinf, tag + "linf " + fmt(run.dist) + " after " +
                                         std::to_string(run.r.trace.iterations()) + " iterations");
    if (run.dist <= kOracleLinf) {
      o.note(tag + "linf " + fmt(run.dist) + " in " + std::to_string(run.r.trace.iterations()) + " iterations");
    }
  }
  return o;
}

// ------------------------------------------------------------------ AC5

FbRun run5() {
  const ProblemInstance inst = pinned_lasso();
  const FBProblem& p = *inst.fb;
  FBParams params = fb_params(MetricSequence::constant(Metric::identity(20)), 2.99 * p.b.beta, 0.5, 0.005);
  params.mode = FBMode::extended_step;
  RunOptions opts;
  opts.store_iterates = false;
  opts.validation_horizon = 1000;
  FbRun out;
  out.r = solve_fb_extended(p, params, inst.x0, tight(kExtendedMaxIter), opts);
  out.dist = linf(out.r.x_final, inst.solution);
  return out;
}

Outcome ac5(Traces& tr) {
  Outcome o;
  const ProblemInstance inst = pinned_lasso();
  const double beta = inst.fb->b.beta;
  const double phi = fb_extended_phi(2.99 * beta, 1.0, beta, 0.5);
  o.check(std::abs(phi - 1.0 / 1.01) <= 1e-12 && phi <= 1.0 - 0.005, "phi " + fmt(phi));

  const FbRun run = run5();
  tr.csv.push_back(csv_of(run.r.trace));
  o.check(run.r.validation.passed(), "extended-step validation failed");
  o.check(run.dist <= kOracleLinf,
          "linf " + fmt(run.dist) + " after " + std::to_string(run.r.trace.iterations()) + " iterations");
  if (run.dist <= kOracleLinf) {
    o.note("phi=1/1.01, linf " + fmt(run.dist) + " in " + std::to_string(run.r.trace.iterations()) + " iterations");
  }

  // Control: the same step in overrelaxed mode must be rejected by the CLI.
  const auto dir = std::filesystem::temp_directory_path() / ("msplit_acc_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto spec = dir / "control.json";
  std::ofstream(spec) << R"({"schema_version": 1, "solver": "fb",
    "problem": {"name": "lasso", "seed": 42, "rows": 5, "cols": 20, "tau_ratio": 0.1},
    "params": {"metric": "identity", "gamma": {"times_beta": 2.99}, "lambda": 1.0, "epsilon": 0.005},
    "stop": {"max_iter": 1000}, "output": ")"
                      << (dir / "out").string() << "\"}";
  std::string output;
  const int code = run_cli("run '" + spec.string() + "'", output);
  std::filesystem::remove_all(dir);
  o.check(code == 2, "control run exit " + std::to_string(code));
  o.check(output.find("gamma window") != std::string::npos, "control run did not name the gamma window");
  if (code == 2) o.note("control exit 2");
  return o;
}

// ------------------------------------------------------------------ AC6

Outcome ac6(Traces&) {
  Outcome o;
  const ProblemInstance inst = make_fused_toy(7, 12, 0.5, 10.0);
  const CompositeProblem& p = *inst.pd;
  PDParams params;
  params.primal_metrics = MetricSequence::constant(Metric::scaled_identity(12, 0.3));
  params.dual_metrics = {MetricSequence::constant(Metric::scaled_identity(11, 0.3))};
  StopRule stop;
  stop.residual_tol.reset();
  stop.max_iter = 5 * kMembershipPoints;
  RunOptions opts;
  opts.store_iterates = true;
  const PDResult r = solve_pd(p, params, inst.x0, inst.v0, stop, opts);
  const Metric u = params.primal_metrics.at(0);
  const std::vector<Metric> duals{params.dual_metrics[0].at(0)};
  double worst = 0.0;
  std::size_t points = 0;
  for (std::size_t n = 0; n < r.trace.iterations() && points < kMembershipPoints; n += 5, ++points) {
    const auto& rec = r.trace.records[n];
    for (double res : product::membership_residuals(p, u, duals, rec.x, rec.y)) worst = std::max(worst, res);
  }
  o.check(points == kMembershipPoints, "only " + std::to_string(points) + " iterates");
  o.check(worst <= kMembershipTol, "worst membership residual " + fmt(worst));
  if (o.ok) o.note("worst membership residual " + fmt(worst) + " at " + std::to_string(points) + " iterates");
  return o;
}

// ------------------------------------------------------------------ AC7

PDResult run7() {
  const ProblemInstance inst = make_fused_toy(7, 12, 0.5, 10.0);
  PDParams params;
  params.primal_metrics = MetricSequence::constant(Metric::scaled_identity(12, 0.3));
  params.dual_metrics = {MetricSequence::constant(Metric::scaled_identity(11, 0.3))};
  params.zeta_variant = ZetaVariant::delta_numerator;
  RunOptions opts;
  opts.store_iterates = false;
  StopRule stop;
  stop.residual_tol = 1e-12;
  stop.relative_to_x0 = false;
  stop.max_iter = kPdMaxIter;
  return solve_pd(*inst.pd, params, inst.x0, inst.v0, stop, opts);
}

Outcome ac7(Traces& tr) {
  Outcome o;
  const ProblemInstance inst = make_fused_toy(7, 12, 0.5, 10.0);
  const PDResult r = run7();
  tr.csv.push_back(csv_of(r.trace));
  o.check(r.validation.passed(), "pd validation failed");
  o.check(r.final_kkt.primal < kKktTol, "primal residual " + fmt(r.final_kkt.primal));
  o.check(r.final_kkt.dual.at(0) < kKktTol, "dual residual " + fmt(r.final_kkt.dual.at(0)));
  const double dist = linf(r.x_final, inst.solution);
  o.check(dist <= kPdOracle, "oracle linf " + fmt(dist));
  if (o.ok) {
    o.note("zeta=" + fmt(r.steps.front().zeta) + ", lambda=" + fmt(r.steps.front().lambda) + ", kkt " +
           fmt(r.final_kkt.max()) + ", oracle linf " + fmt(dist) + " in " +
           std::to_string(r.trace.iterations()) + " iterations");
  }
  return o;
}

// ------------------------------------------------------------------ AC8

Outcome ac8() {
  Outcome o;
  const Metric id2 = Metric::identity(2);
  o.check(inner_u(id2, vec({1, 2}), vec({3, 4})) == 11.0, "inner_u identity");
  o.check(inner_u(Metric::diagonal(vec({2, 3})), vec({1, 1}), vec({1, 1})) == 5.0, "inner_u diagonal");
  o.check(norm_u(id2, vec({3, 4})) == 5.0, "norm_u identity");
  o.check(std::abs(norm_u(Metric::diagonal(vec({4, 9})), vec({1, 1})) - std::sqrt(13.0)) <= 1e-15, "norm_u diagonal");

  o.check(loewner_geq(Metric::diagonal(vec({2, 2})), Metric::diagonal(vec({1, 1})), 0.0), "loewner diag(2,2)");
  o.check(!loewner_geq(Metric::diagonal(vec({1, 3})), Metric::diagonal(vec({2, 1})), 0.0), "loewner indefinite");
  const Matrix a = random_spd(4, 201, 0.5, 3.0);
  const Metric ua = Metric::dense(a);
  const Metric ub = Metric::dense(Matrix(a + 1e-8 * Matrix::Identity(4, 4)));
  o.check(loewner_geq(ua, ub, 1e-7) && loewner_geq(ub, ua, 1e-7), "loewner dense perturbation");

  const Metric inv = inverse(Metric::diagonal(vec({2, 4})));
  o.check(inv.diagonal_entries() == vec({0.5, 0.25}), "inverse diagonal");
  o.check(inverse(id2).diagonal_entries() == Vector::Ones(2), "inverse identity");
  const Metric ia = inverse(ua);
  o.check((a * ia.to_dense() - Matrix::Identity(4, 4)).norm() <= 1e-10, "U U^-1 = Id");
  o.check((inverse(ia).to_dense() - a).norm() <= 1e-10 * a.norm(), "inverse involution");
  std::mt19937_64 rng(202);
  for (int k = 0; k < 100; ++k) {
    const Vector x = gaussian(4, rng);
    if (ia.apply(x).dot(x) < x.squaredNorm() / ua.norm_ub() * (1.0 - 1e-12)) {
      o.check(false, "<U^-1 x, x> >= ||U||^-1 ||x||^2");
      break;
    }
    const double q = ua.inner(x, x);
    if (q < ua.alpha_lb() * x.squaredNorm() * (1.0 - 1e-12) || q > ua.norm_ub() * x.squaredNorm() * (1.0 + 1e-12)) {
      o.check(false, "norm sandwich");
      break;
    }
  }
  o.check(sqrt(Metric::diagonal(vec({4, 9}))).diagonal_entries() == vec({2, 3}), "sqrt diagonal");
  o.check(sqrt(id2).diagonal_entries() == Vector::Ones(2), "sqrt identity");
  const Matrix ra = sqrt(ua).to_dense();
  o.check((ra * ra - a).norm() <= 1e-10 * a.norm(), "sqrt reconstruction");

  // Lemma chain: mu Id >= A >= B >= alpha Id  =>  1/alpha Id >= B^-1 >= A^-1 >= 1/mu Id.
  for (int k = 0; k < 200; ++k) {
    const Vector b = random_positive(5, 300 + k, 0.5, 2.0);
    const Vector aa = b + random_positive(5, 600 + k, 0.0, 1.0);
    const double alpha = 0.5, mu = 3.0;
    const Metric ma = Metric::diagonal(aa), mb = Metric::diagonal(b);
    const Metric lo = Metric::scaled_identity(5, 1.0 / mu), hi = Metric::scaled_identity(5, 1.0 / alpha);
    const bool pre = loewner_geq(Metric::scaled_identity(5, mu), ma, 0.0) && loewner_geq(ma, mb, 0.0) &&
                     loewner_geq(mb, Metric::scaled_identity(5, alpha), 0.0);
    const bool post = loewner_geq(hi, inverse(mb), 0.0) && loewner_geq(inverse(mb), inverse(ma), 0.0) &&
                      loewner_geq(inverse(ma), lo, 0.0);
    if (!pre || !post) {
      o.check(false, "Loewner inverse chain at sample " + std::to_string(k));
      break;
    }
  }

  const MetricSequence constant({Metric::identity(3), Metric::identity(3), Metric::identity(3)}, {0.0, 0.0, 0.0});
  o.check(validate_sequence(constant, 0.0).passed(), "constant sequence should pass");
  const MetricSequence drop({Metric::diagonal(vec({2})), Metric::diagonal(vec({1}))}, {0.0});
  const auto dr = validate_sequence(drop, 0.0);
  o.check(!dr.passed() && dr.report.first_n("metric ordering") == std::optional<std::size_t>(0),
          "decreasing pair should fail at n=0");
  std::vector<Metric> dec;
  std::vector<double> zero, geo;
  for (int n = 0; n < 30; ++n) {
    dec.push_back(Metric::scaled_identity(2, 1.0 + std::pow(2.0, -n)));
    zero.push_back(0.0);
    geo.push_back(std::pow(2.0, -n));
  }
  o.check(!validate_sequence(MetricSequence(dec, zero), 1e-12).passed(), "(1+2^-n) Id with eta=0 should fail");
  o.check(validate_sequence(MetricSequence(dec, geo), 1e-12).passed(), "(1+2^-n) Id with eta=2^-n should pass");
  const MetricSequence declared({Metric::identity(2), Metric::identity(2)}, {0.1, 0.1}, 0.5);
  o.check(!validate_sequence(declared, 0.0).eta_sum_matches, "declared eta sum mismatch should be reported");
  if (o.ok) o.note("all metric-law checks hold");
  return o;
}

// ------------------------------------------------------------------ AC9

Outcome ac9(const Traces& first) {
  Outcome o;
  std::vector<std::string> again;
  again.push_back(csv_of(run3()));
  for (char which : {'a', 'b', 'c'}) again.push_back(csv_of(run4(which).r.trace));
  again.push_back(csv_of(run5().r.trace));
  again.push_back(csv_of(run7().trace));
  o.check(again.size() == first.csv.size(), "run count differs");
  const char* names[] = {"AC3", "AC4a", "AC4b", "AC4c", "AC5", "AC7"};
  for (std::size_t i = 0; i < std::min(again.size(), first.csv.size()); ++i) {
    o.check(!again[i].empty() && again[i] == first.csv[i], std::string(names[i]) + " trace differs");
  }
  if (o.ok) o.note(std::to_string(again.size()) + " traces byte-identical");
  return o;
}

}  // namespace

int main() {
  struct Entry {
    const char* id;
    const char* title;
    double limit;
    std::function<Outcome()> body;
  };
  Traces traces;
  const std::vector<Entry> entries = {
      {"AC1", "averagedness suite", kLimit1, ac1},
      {"AC2", "composition-constant identity", kLimit2, ac2},
      {"AC3", "two-halfspace monitors", kLimit3, [&] { return ac3(traces); }},
      {"AC4", "FB oracle equivalence (lasso seed 42)", kLimit4, [&] { return ac4(traces); }},
      {"AC5", "extended-step run and control", kLimit5, [&] { return ac5(traces); }},
      {"AC6", "primal-dual product-space membership", kLimit6, [&] { return ac6(traces); }},
      {"AC7", "primal-dual convergence", kLimit7, [&] { return ac7(traces); }},
      {"AC8", "metric-law suite", kLimit8, ac8},
      {"AC9", "determinism of runs 3-7", kLimit9, [&] { return ac9(traces); }},
  };
  int failures = 0;
  for (const auto& e : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = e.body();
    } catch (const std::exception& ex) {
      o.ok = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > e.limit) o.check(false, "runtime " + fmt(secs) + " s exceeds " + fmt(e.limit) + " s");
    failures += o.ok ? 0 : 1;
    std::cout << e.id << ' ' << (o.ok ? "PASS" : "FAIL") << "  " << e.title << " [" << fmt(secs) << " s / "
              << fmt(e.limit) << " s]  " << o.detail << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
