#ifndef MSPLIT_FB_HPP
#define MSPLIT_FB_HPP

// Variable-metric forward-backward splitting for 0 in Ax + Bx,
//
//   x_{n+1} = x_n + lambda_n ( J_{g_n U_n A}(x_n - g_n U_n (B x_n + b_n)) + a_n - x_n ),
//
// run through the composition driver with T_1 = J_{g U A} (1/2-averaged) and
// T_2 = Id - g U B ((g ||U|| / 2 beta)-averaged), and the underrelaxed
// extended-step variant that allows g ||U|| up to 4 beta.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msplit/driver.hpp"
#include "msplit/error.hpp"
#include "msplit/metric.hpp"
#include "msplit/operators.hpp"
#include "msplit/report.hpp"

namespace msplit {

struct FBProblem {
  MonotoneOp a;
  CocoerciveOp b;
  std::optional<Vector> known_solution;

  Index dim() const noexcept { return a.dim; }
};

enum class FBMode { overrelaxed, extended_step };

inline const char* to_string(FBMode m) { return m == FBMode::overrelaxed ? "overrelaxed" : "extended_step"; }

using ScalarSeq = std::function<double(std::size_t)>;
using VectorSeq = std::function<Vector(std::size_t)>;

inline ScalarSeq constant_seq(double v) {
  return [v](std::size_t) { return v; };
}

/// v * decay^n
inline VectorSeq geometric_seq(Vector v, double decay) {
  return [v = std::move(v), decay](std::size_t n) { return Vector(v * std::pow(decay, static_cast<double>(n))); };
}

struct FBParams {
  MetricSequence metrics;
  ScalarSeq gamma_at;
  /// lambda_n in overrelaxed mode, the relaxation mu_n in extended-step mode.
  ScalarSeq lambda_at;
  double epsilon = 1e-2;
  VectorSeq a_at;  // error on the resolvent output; optional
  VectorSeq b_at;  // error on the evaluation of B; optional
  FBMode mode = FBMode::overrelaxed;
  bool allow_violations = false;
};

/// 2 beta / (4 beta - gamma ||U||): averagedness constant of
/// J_{gamma U A} o (Id - gamma U B).
inline double fb_phi(double gamma, double u_norm, double beta) {
  if (!(gamma * u_norm < 4.0 * beta)) {
    throw ParameterWindowError("gamma window", std::nullopt, "fb_phi requires gamma*||U|| < 4*beta");
  }
  return 2.0 * beta / (4.0 * beta - gamma * u_norm);
}

/// Upper end of the overrelaxation window, 1 + (1-eps)(1 - gamma ||U|| / (2 beta)).
inline double fb_lambda_top(double gamma, double u_norm, double beta, double epsilon) {
  return 1.0 + (1.0 - epsilon) * (1.0 - gamma * u_norm / (2.0 * beta));
}

/// Largest step of the overrelaxed window, 2 beta / ((1+eps) ||U||).
inline double fb_gamma_top(double u_norm, double beta, double epsilon) {
  return 2.0 * beta / ((1.0 + epsilon) * u_norm);
}

/// Extended-step constant 2 mu beta / (4 beta - ||U|| gamma).
inline double fb_extended_phi(double gamma, double u_norm, double beta, double mu) {
  return mu * fb_phi(gamma, u_norm, beta);
}

/// Per-n parameter windows of the declared mode over the first `horizon`
/// indices, plus the metric-sequence hypotheses.
inline ValidationReport validate_fb(const FBProblem& p, const FBParams& params, std::size_t horizon) {
  ValidationReport rep;
  const double beta = p.b.beta;
  const double eps = params.epsilon;
  if (params.metrics.dim() != p.dim()) rep.fail("dimension", std::nullopt, "metric dimension differs from problem");
  if (params.mode == FBMode::overrelaxed) {
    if (!(eps > 0.0 && eps < std::min(0.5, beta))) {
      rep.fail("epsilon range", std::nullopt,
               "epsilon=" + std::to_string(eps) + " must lie in ]0, min{1/2, beta}[ with beta=" + std::to_string(beta));
    }
  } else {
    if (!(eps > 0.0 && eps < 0.5)) rep.fail("epsilon range", std::nullopt, "epsilon must lie in ]0, 1/2[");
    if (params.a_at || params.b_at) {
      rep.fail("error sequences", std::nullopt, "the extended-step variant takes no error sequences");
    }
  }
  for (std::size_t n = 0; n < horizon; ++n) {
    const double u = params.metrics.at(n).norm_ub();
    const double g = params.gamma_at(n);
    const double l = params.lambda_at(n);
    if (params.mode == FBMode::overrelaxed) {
      const double gtop = fb_gamma_top(u, beta, eps);
      if (!(g >= eps && g <= gtop)) {
        rep.fail("gamma window", n,
                 "gamma=" + format_double(g) + " outside [epsilon, 2 beta/((1+epsilon)||U_n||)] = [" + format_double(eps) +
                     ", " + format_double(gtop) + "]");
        continue;
      }
      const double ltop = fb_lambda_top(g, u, beta, eps);
      if (!(l >= eps && l <= ltop)) {
        rep.fail("lambda window", n,
                 "lambda=" + format_double(l) + " outside [epsilon, 1+(1-epsilon)(1-gamma||U_n||/(2 beta))] = [" +
                     format_double(eps) + ", " + format_double(ltop) + "]");
      }
    } else {
      if (!(g >= eps)) rep.fail("gamma window", n, "gamma=" + format_double(g) + " below epsilon");
      if (!(l >= eps)) rep.fail("mu window", n, "mu=" + format_double(l) + " below epsilon");
      if (!(g * u < 4.0 * beta)) {
        rep.fail("gamma window", n, "gamma*||U_n|| = " + format_double(g * u) + " must be below 4 beta");
        continue;
      }
      const double phi = fb_extended_phi(g, u, beta, l);
      if (!(phi <= 1.0 - eps)) {
        rep.fail("phi bound", n,
                 "phi = 2 mu beta/(4 beta - ||U_n|| gamma) = " + format_double(phi) + " exceeds 1 - epsilon = " +
                     format_double(1.0 - eps));
      }
    }
  }
  const auto seq = validate_sequence(params.metrics, 1e-10 * params.metrics.mu(),
                                     std::min(horizon, std::max<std::size_t>(1, params.metrics.horizon())));
  rep.merge(seq.report);
  rep.notes.push_back("zer(A+B) nonempty: assumed");
  return rep;
}

struct FBResult {
  IterationTrace trace;
  Vector x_final;
  FBMode mode = FBMode::overrelaxed;
  ValidationReport validation;
  /// rho_n = ||J_{g_n U_n A}(x_n - g_n U_n B x_n) - x_n||
  std::vector<double> fb_residuals;
  /// ||B x_n - B x*||^2, only when a solution is known
  std::vector<double> gradient_gaps;
};

namespace detail {

// Gradient gaps are accumulated on the fly so long runs need not keep iterates.
inline RunOptions gap_observer(const FBProblem& p, const RunOptions& opts, std::vector<double>& gaps) {
  RunOptions o = opts;
  if (!p.known_solution) return o;
  const Vector bs = p.b(*p.known_solution);
  auto prev = opts.observe;
  o.observe = [&p, bs, &gaps, prev](std::size_t n, const Vector& x) {
    gaps.push_back((p.b(x) - bs).squaredNorm());
    if (prev) prev(n, x);
  };
  return o;
}

inline void finish_fb(FBResult& r) {
  r.x_final = r.trace.x_final;
  r.fb_residuals.reserve(r.trace.records.size());
  for (const auto& rec : r.trace.records) r.fb_residuals.push_back(rec.l2_residual);
}

inline std::size_t fb_horizon(const StopRule& stop, const RunOptions& opts) {
  return opts.validation_horizon ? opts.validation_horizon : std::min<std::size_t>(stop.max_iter, 1000);
}

}  // namespace detail

inline FBResult solve_fb_extended(const FBProblem& p, const FBParams& params, const Vector& x0, const StopRule& stop,
                                  const RunOptions& opts = {});

/// Overrelaxed variable-metric forward-backward (dispatches to the
/// extended-step variant when params.mode says so).
inline FBResult solve_fb(const FBProblem& p, const FBParams& params, const Vector& x0, const StopRule& stop,
                         const RunOptions& opts = {}) {
  if (params.mode == FBMode::extended_step) return solve_fb_extended(p, params, x0, stop, opts);
  require_dim(p.dim(), x0.size(), "solve_fb x0");
  require_dim(p.a.dim, p.b.dim, "solve_fb operators");
  FBResult out;
  out.mode = FBMode::overrelaxed;
  out.validation = validate_fb(p, params, detail::fb_horizon(stop, opts));
  if (!out.validation.passed() && !params.allow_violations) {
    const Issue& i = *out.validation.first_issue();
    throw ParameterWindowError(i.check, i.n, i.message);
  }
  const double beta = p.b.beta;

  OperatorSchedule s;
  s.m = 2;
  s.metrics = params.metrics;
  s.epsilon = params.epsilon;
  s.strong_window = true;
  s.allow_violations = params.allow_violations;
  s.lambda_at = params.lambda_at;
  s.factors_at = [&p, &params, beta](std::size_t n) {
    const Metric u = params.metrics.at(n);
    const double g = params.gamma_at(n);
    const CocoerciveOp b = p.b;
    AveragedMap fwd{p.dim(), [b, g, u](const Vector& x) { return Vector(x - g * u.apply(b(x))); },
                    g * u.norm_ub() / (2.0 * beta), u, "Id-gU[" + b.name + "]"};
    return std::vector<AveragedMap>{resolvent_map(p.a, g, u), std::move(fwd)};
  };
  s.phi_at = [&params, beta](std::size_t n) {
    return fb_phi(params.gamma_at(n), params.metrics.at(n).norm_ub(), beta);
  };
  if (params.a_at || params.b_at) {
    s.errors_at = [&params](std::size_t i, std::size_t n) -> Vector {
      if (i == 0) return params.a_at ? params.a_at(n) : Vector();
      if (!params.b_at) return {};
      return -params.gamma_at(n) * params.metrics.at(n).apply(params.b_at(n));
    };
  }
  out.trace = iterate(s, x0, stop, detail::gap_observer(p, opts, out.gradient_gaps));
  out.trace.validation.merge(out.validation);
  detail::finish_fb(out);
  return out;
}

/// x_{n+1} = x_n + mu_n (J_{g U A}(x_n - g U B x_n) - x_n) with
/// g ||U|| < 4 beta and 2 mu beta / (4 beta - ||U|| g) <= 1 - eps: a single
/// relaxed factor of constant phi_n run with unit driver relaxation.
inline FBResult solve_fb_extended(const FBProblem& p, const FBParams& params, const Vector& x0, const StopRule& stop,
                                  const RunOptions& opts) {
  require_dim(p.dim(), x0.size(), "solve_fb_extended x0");
  FBResult out;
  out.mode = FBMode::extended_step;
  FBParams ext = params;
  ext.mode = FBMode::extended_step;
  out.validation = validate_fb(p, ext, detail::fb_horizon(stop, opts));
  if (!out.validation.passed() && !params.allow_violations) {
    const Issue& i = *out.validation.first_issue();
    throw ParameterWindowError(i.check, i.n, i.message);
  }
  const double beta = p.b.beta;

  OperatorSchedule s;
  s.m = 1;
  s.metrics = params.metrics;
  s.epsilon = params.epsilon;
  s.strong_window = true;
  s.allow_violations = params.allow_violations;
  s.lambda_at = constant_seq(1.0);
  s.phi_at = [&params, beta](std::size_t n) {
    return fb_extended_phi(params.gamma_at(n), params.metrics.at(n).norm_ub(), beta, params.lambda_at(n));
  };
  s.factors_at = [&p, &params, beta](std::size_t n) {
    const Metric u = params.metrics.at(n);
    const double g = params.gamma_at(n);
    const double mu = params.lambda_at(n);
    const MonotoneOp a = p.a;
    const CocoerciveOp b = p.b;
    AveragedMap fb{p.dim(),
                   [a, b, g, u](const Vector& x) { return resolvent_step(a, g, u, Vector(x - g * u.apply(b(x)))); },
                   fb_phi(g, u.norm_ub(), beta), u, "J*F"};
    return std::vector<AveragedMap>{relax(fb, mu, fb.alpha)};
  };
  out.trace = iterate(s, x0, stop, detail::gap_observer(p, opts, out.gradient_gaps));
  out.trace.validation.merge(out.validation);
  detail::finish_fb(out);
  return out;
}

struct ResidualReport {
  MonitorReport fb_residual;                    // partial sums of rho_n^2
  std::optional<MonitorReport> gradient_gap;    // partial sums of ||Bx_n - Bx*||^2
};

inline ResidualReport fb_residuals(const FBResult& r, const SummabilityOptions& opt = {}) {
  if (r.trace.empty()) throw Error("fb_residuals: empty trace");
  ResidualReport out;
  std::vector<double> sq;
  sq.reserve(r.fb_residuals.size());
  for (double v : r.fb_residuals) sq.push_back(v * v);
  out.fb_residual = summability_of(sq, opt);
  if (!r.gradient_gaps.empty()) out.gradient_gap = summability_of(r.gradient_gaps, opt);
  return out;
}

/// ||J_{g U A}(x - g U B x) - x||: zero exactly on zer(A+B).
inline double fb_fixed_point_residual(const FBProblem& p, double gamma, const Metric& u, const Vector& x) {
  return (resolvent_step(p.a, gamma, u, Vector(x - gamma * u.apply(p.b(x)))) - x).norm();
}

}  // namespace msplit

#endif  // MSPLIT_FB_HPP
