#ifndef MSPLIT_DRIVER_HPP
#define MSPLIT_DRIVER_HPP

// Relaxed iteration of compositions of averaged operators under a variable
// metric, with per-factor error injection:
//
//   y_n     = T_1(T_2(... T_m x_n + e_m ...) + e_2) + e_1
//   x_{n+1} = x_n + lambda_n (y_n - x_n)
//
// Factor 0 of a schedule is the outermost map T_1; factor m-1 is applied
// first. Residuals are measured in ||.||_{U_n^{-1}}, the geometry in which
// the factors are averaged.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "msplit/error.hpp"
#include "msplit/metric.hpp"
#include "msplit/operators.hpp"
#include "msplit/report.hpp"

namespace msplit {

struct OperatorSchedule {
  std::size_t m = 1;
  std::function<std::vector<AveragedMap>(std::size_t)> factors_at;
  /// Averagedness constant of the composition; when empty, the constants of
  /// the factors are composed.
  std::function<double(std::size_t)> phi_at;
  /// (i, n) -> e_{i+1,n}. May be empty; an empty returned vector means zero.
  std::function<Vector(std::size_t, std::size_t)> errors_at;
  std::function<double(std::size_t)> lambda_at;
  MetricSequence metrics;
  double epsilon = 0.1;
  /// Enforce lambda_n <= epsilon + (1 - epsilon)/phi_n (needed for the
  /// per-factor defect bounds); lambda_n < 1/phi_n is always enforced.
  bool strong_window = true;
  /// Record window violations instead of refusing to run.
  bool allow_violations = false;
  /// Optional per-factor bound on sum_n lambda_n ||e_{i,n}||_{U_n^{-1}}.
  std::vector<double> error_budget;

  double phi(std::size_t n, const std::vector<AveragedMap>& factors) const {
    if (phi_at) return phi_at(n);
    std::vector<double> alphas;
    alphas.reserve(factors.size());
    for (const auto& f : factors) alphas.push_back(f.alpha);
    return compose_constants(alphas);
  }

  Vector error(std::size_t i, std::size_t n) const {
    if (!errors_at) return {};
    return errors_at(i, n);
  }
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// lambda in ]0, 1/phi[ and, for the strong window, lambda <= eps + (1-eps)/phi
/// (relative slack 1e-12 on the closed end).
inline bool lambda_in_window(double lambda, double phi, double epsilon, bool strong) {
  if (!(phi > 0.0 && phi < 1.0)) return false;
  if (!(lambda > 0.0 && lambda < 1.0 / phi)) return false;
  if (!strong) return true;
  const double top = epsilon + (1.0 - epsilon) / phi;
  return lambda <= top * (1.0 + 1e-12);
}

struct StopRule {
  /// Stop once residual_u <= residual_tol (times 1 + ||x_0|| when relative).
  std::optional<double> residual_tol = 1e-9;
  bool relative_to_x0 = true;
  std::size_t max_iter = 100000;
  /// Stop when ||x_n - x_{n-w}|| <= stagnation_tol; 0 disables.
  std::size_t stagnation_window = 0;
  double stagnation_tol = 1e-8;
};

enum class StopReason { residual, max_iter, stagnation };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::residual: return "residual";
    case StopReason::max_iter: return "max_iter";
    case StopReason::stagnation: return "stagnation";
  }
  return "?";
}

struct RunOptions {
  /// A known point of S. Enables the quasi-Fejer and per-factor defect monitors.
  std::optional<Vector> reference;
  bool store_iterates = true;
  /// Wall-clock column; off by default so that traces are reproducible byte
  /// for byte.
  bool record_timing = false;
  /// Number of leading indices validated before the run; 0 means
  /// min(max_iter, 1000).
  std::size_t validation_horizon = 0;
  std::size_t cauchy_window = 50;
  double cauchy_tol = 1e-8;
  /// Called with (n, x_n) once per iteration; lets callers reduce iterates
  /// without storing them.
  std::function<void(std::size_t, const Vector&)> observe;
};

struct IterationRecord {
  std::size_t n = 0;
  Vector x;  // x_n (empty unless iterates are stored)
  Vector y;  // y_n (empty unless iterates are stored)
  double lambda = 0.0;
  double phi = 0.0;
  double residual_u = 0.0;   // ||T_1...T_m x_n - x_n||_{U_n^{-1}}
  double summand = 0.0;      // lambda_n (1/phi_n - lambda_n) residual_u^2
  double l2_residual = 0.0;  // ||T_1...T_m x_n - x_n||
  double wallclock_us = 0.0;
  bool window_ok = true;
  std::vector<double> defects;     // per factor, only with a reference point
  std::optional<double> fejer;     // ||x_n - x*||^2_{U_n^{-1}} / prod_{k<n}(1 + eta_k)
  std::vector<double> extra;       // solver-specific columns
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  std::vector<std::string> extra_columns;
  Vector x_final;
  StopReason reason = StopReason::max_iter;
  ValidationReport validation;
  bool iterates_cauchy = false;

  std::size_t iterations() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  std::vector<double> summands() const {
    std::vector<double> s;
    s.reserve(records.size());
    for (const auto& r : records) s.push_back(r.summand);
    return s;
  }
};

struct ScheduleReport {
  ValidationReport report;
  std::vector<double> error_partial_sums;  // per factor, over the horizon
};

/// Checks every hypothesis that is computable over the first `horizon`
/// indices. Nonemptiness of the common fixed-point set is recorded as assumed.
inline ScheduleReport validate_schedule(const OperatorSchedule& s, std::size_t horizon) {
  ScheduleReport out;
  auto& rep = out.report;
  if (horizon == 0) throw Error("validate_schedule: horizon must be positive");
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) {
    rep.fail("epsilon range", std::nullopt, "epsilon must lie in ]0,1[, got " + std::to_string(s.epsilon));
  }
  out.error_partial_sums.assign(s.m, 0.0);
  for (std::size_t n = 0; n < horizon; ++n) {
    const auto factors = s.factors_at(n);
    if (factors.size() != s.m) {
      rep.fail("schedule shape", n, "expected " + std::to_string(s.m) + " factors");
      continue;
    }
    const Metric u = s.metrics.at(n);
    bool alphas_ok = true;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const double a = factors[i].alpha;
      if (!(a > 0.0 && a < 1.0)) {
        alphas_ok = false;
        rep.fail("averagedness constant", n,
                 "factor " + std::to_string(i + 1) + " has constant " + std::to_string(a) + " outside ]0,1[");
      }
      if (factors[i].dim != u.dim()) rep.fail("schedule shape", n, "factor dimension differs from metric dimension");
    }
    if (!alphas_ok && !s.phi_at) continue;
    const double phi = s.phi(n, factors);
    const double lambda = s.lambda_at(n);
    if (!(phi > 0.0 && phi < 1.0)) {
      rep.fail("phi range", n, "composite constant phi=" + format_double(phi) + " outside ]0,1[");
    } else {
      if (!(lambda > 0.0 && lambda < 1.0 / phi)) {
        rep.fail("lambda window", n,
                 "lambda=" + format_double(lambda) + " outside ]0, 1/phi[ = ]0, " + format_double(1.0 / phi) + "[");
      } else if (!lambda_in_window(lambda, phi, s.epsilon, s.strong_window)) {
        const double top = s.epsilon + (1.0 - s.epsilon) / phi;
        rep.fail("lambda window", n,
                 "lambda=" + format_double(lambda) + " exceeds epsilon + (1-epsilon)/phi = " + format_double(top));
      }
    }
    for (std::size_t i = 0; i < s.m; ++i) {
      const Vector e = s.error(i, n);
      if (e.size() > 0) out.error_partial_sums[i] += lambda * u.inverse_norm(e);
    }
  }
  for (std::size_t i = 0; i < s.error_budget.size() && i < s.m; ++i) {
    if (out.error_partial_sums[i] > s.error_budget[i]) {
      rep.fail("error summability", std::nullopt,
               "factor " + std::to_string(i + 1) + " partial error sum " + std::to_string(out.error_partial_sums[i]) +
                   " exceeds budget " + std::to_string(s.error_budget[i]));
    }
  }
  const auto seq = validate_sequence(s.metrics, 1e-10 * s.metrics.mu(), std::min(horizon, std::max<std::size_t>(1, s.metrics.horizon())));
  rep.merge(seq.report);
  rep.notes.push_back("common fixed-point set S nonempty: assumed");
  return out;
}

namespace detail {

inline void require_finite(const Vector& v, std::size_t n, const char* what) {
  if (!v.allFinite()) throw NumericalError(n, what);
}

}  // namespace detail

/// Runs the relaxed composition iteration. Throws ParameterWindowError on a
/// failed hypothesis unless the schedule allows violations, and
/// NumericalError on non-finite iterates.
inline IterationTrace iterate(const OperatorSchedule& s, const Vector& x0, const StopRule& stop,
                              const RunOptions& opts = {}) {
  require_dim(s.metrics.dim(), x0.size(), "iterate x0");
  if (stop.max_iter == 0) throw Error("iterate: max_iter must be positive");
  IterationTrace trace;
  const std::size_t horizon = opts.validation_horizon ? opts.validation_horizon : std::min<std::size_t>(stop.max_iter, 1000);
  trace.validation = validate_schedule(s, horizon).report;
  if (!trace.validation.passed() && !s.allow_violations) {
    const Issue& i = *trace.validation.first_issue();
    throw ParameterWindowError(i.check, i.n, i.message);
  }
  if (opts.reference) require_dim(x0.size(), opts.reference->size(), "iterate reference");

  const double threshold =
      stop.residual_tol ? *stop.residual_tol * (stop.relative_to_x0 ? 1.0 + x0.norm() : 1.0) : -1.0;
  const std::size_t keep = std::max(stop.stagnation_window, opts.cauchy_window) + 1;
  std::deque<Vector> recent;
  recent.push_back(x0);

  Vector x = x0;
  double eta_product = 1.0;
  for (std::size_t n = 0;; ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto factors = s.factors_at(n);
    if (factors.size() != s.m) throw Error("iterate: factor count changed at n=" + std::to_string(n));
    const Metric u = s.metrics.at(n);
    const double phi = s.phi(n, factors);
    const double lambda = s.lambda_at(n);

    IterationRecord rec;
    rec.n = n;
    rec.lambda = lambda;
    rec.phi = phi;
    rec.window_ok = lambda_in_window(lambda, phi, s.epsilon, s.strong_window);
    if (!rec.window_ok && !s.allow_violations) {
      throw ParameterWindowError("lambda window", n,
                                 "lambda=" + format_double(lambda) + ", phi=" + format_double(phi));
    }

    // Error-free chain: inputs[i] = T_{i+} x_n.
    std::vector<Vector> inputs(s.m);
    Vector z = x;
    for (std::size_t k = s.m; k-- > 0;) {
      inputs[k] = z;
      z = factors[k](z);
    }
    const Vector clean = z;
    detail::require_finite(clean, n, "composite image");

    std::vector<Vector> errs(s.m);
    bool any_error = false;
    for (std::size_t i = 0; i < s.m; ++i) {
      errs[i] = s.error(i, n);
      if (errs[i].size() > 0) {
        require_dim(x.size(), errs[i].size(), "iterate error vector");
        any_error = any_error || errs[i].cwiseAbs().maxCoeff() > 0.0;
      }
    }
    Vector y;
    if (any_error) {
      y = x;
      for (std::size_t k = s.m; k-- > 0;) {
        y = factors[k](y);
        if (errs[k].size() > 0) y += errs[k];
      }
    } else {
      y = clean;
    }
    detail::require_finite(y, n, "y_n");

    const Vector disp = clean - x;
    rec.residual_u = u.inverse_norm(disp);
    rec.l2_residual = disp.norm();
    rec.summand = lambda * (1.0 / phi - lambda) * rec.residual_u * rec.residual_u;

    if (opts.reference) {
      const Vector& xs = *opts.reference;
      rec.fejer = u.inverse_norm_sq(x - xs) / eta_product;
      Vector zs = xs;
      rec.defects.resize(s.m);
      std::vector<Vector> ref_inputs(s.m);
      for (std::size_t k = s.m; k-- > 0;) {
        ref_inputs[k] = zs;
        zs = factors[k](zs);
      }
      for (std::size_t i = 0; i < s.m; ++i) {
        const double a = factors[i].alpha;
        const Vector dx = inputs[i] - factors[i](inputs[i]);
        const Vector ds = ref_inputs[i] - factors[i](ref_inputs[i]);
        rec.defects[i] = lambda * (1.0 - a) / a * u.inverse_norm_sq(dx - ds);
      }
    }
    if (opts.observe) opts.observe(n, x);
    if (opts.store_iterates) {
      rec.x = x;
      rec.y = y;
    }

    const bool converged = threshold >= 0.0 && rec.residual_u <= threshold;
    if (!converged) {
      x = x + lambda * (y - x);
      detail::require_finite(x, n, "x_{n+1}");
      eta_product *= 1.0 + s.metrics.eta(n);
      recent.push_back(x);
      if (recent.size() > keep) recent.pop_front();
    }
    if (opts.record_timing) {
      rec.wallclock_us =
          std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    }
    trace.records.push_back(std::move(rec));

    if (converged) {
      trace.reason = StopReason::residual;
      break;
    }
    if (stop.stagnation_window > 0 && recent.size() > stop.stagnation_window &&
        (recent.back() - recent[recent.size() - 1 - stop.stagnation_window]).norm() <= stop.stagnation_tol) {
      trace.reason = StopReason::stagnation;
      break;
    }
    if (n + 1 >= stop.max_iter) {
      trace.reason = StopReason::max_iter;
      break;
    }
  }
  trace.x_final = x;
  if (recent.size() > opts.cauchy_window) {
    double worst = 0.0;
    for (std::size_t k = recent.size() - 1 - opts.cauchy_window; k + 1 < recent.size(); ++k) {
      worst = std::max(worst, (recent.back() - recent[k]).norm());
    }
    trace.iterates_cauchy = worst <= opts.cauchy_tol;
  } else {
    trace.iterates_cauchy = trace.reason == StopReason::residual;
  }
  return trace;
}

struct SummabilityOptions {
  std::size_t tail_window = 100;
  double cauchy_tol = 1e-10;
};

struct MonitorReport {
  std::vector<double> partial_sums;
  double total = 0.0;
  double tail_increment = 0.0;          // sum of the last K terms
  std::optional<double> tail_exponent;  // slope of log(term) against log(n+1) over the last half
  bool summable_consistent = false;
};

/// Desk-scale summability diagnostic for a nonnegative sequence: consistent
/// when the tail is identically zero, the tail increment is below the Cauchy
/// tolerance, or the fitted power-law exponent of the tail is below -1. A
/// negative term (possible only outside the parameter windows) makes the
/// sequence inconsistent.
inline MonitorReport summability_of(std::span<const double> terms, const SummabilityOptions& opt = {}) {
  MonitorReport r;
  r.partial_sums.reserve(terms.size());
  double acc = 0.0;
  for (double t : terms) {
    acc += t;
    r.partial_sums.push_back(acc);
  }
  r.total = acc;
  const std::size_t len = terms.size();
  if (len == 0) {
    r.summable_consistent = true;
    return r;
  }
  const std::size_t k = std::min(opt.tail_window, std::max<std::size_t>(1, len / 2));
  for (std::size_t i = len - k; i < len; ++i) r.tail_increment += terms[i];

  const std::size_t half = len / 2;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t cnt = 0;
  bool tail_zero = true;
  for (std::size_t i = half; i < len; ++i) {
    if (terms[i] != 0.0) tail_zero = false;
    if (terms[i] > 0.0 && std::isfinite(terms[i])) {
      const double lx = std::log(static_cast<double>(i + 1));
      const double ly = std::log(terms[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++cnt;
    }
  }
  if (cnt >= 3) {
    const double den = static_cast<double>(cnt) * sxx - sx * sx;
    if (den > 0.0) r.tail_exponent = (static_cast<double>(cnt) * sxy - sx * sy) / den;
  }
  const bool finite = std::isfinite(r.total);
  const bool nonnegative = std::all_of(terms.begin(), terms.end(), [](double t) { return t >= 0.0; });
  r.summable_consistent =
      finite && nonnegative && (tail_zero || r.tail_increment < opt.cauchy_tol || (r.tail_exponent && *r.tail_exponent < -1.0));
  return r;
}

/// Summability of lambda_n (1/phi_n - lambda_n) ||T_1...T_m x_n - x_n||^2.
inline MonitorReport summability_monitor(const IterationTrace& trace, const SummabilityOptions& opt = {}) {
  if (trace.empty()) throw Error("summability_monitor: empty trace");
  const auto s = trace.summands();
  return summability_of(s, opt);
}

struct FejerReport {
  bool monotone = true;
  double worst_increase = 0.0;  // max_n (d_{n+1} - d_n)
  std::optional<std::size_t> first_violation;
};

/// The normalized distances ||x_n - x*||^2_{U_n^{-1}} / prod(1 + eta_k) must
/// not increase by more than `slack` per step.
inline FejerReport fejer_monitor(const IterationTrace& trace, double slack) {
  FejerReport r;
  for (std::size_t i = 1; i < trace.records.size(); ++i) {
    const auto& a = trace.records[i - 1].fejer;
    const auto& b = trace.records[i].fejer;
    if (!a || !b) throw Error("fejer_monitor: trace was recorded without a reference point");
    const double inc = *b - *a;
    r.worst_increase = std::max(r.worst_increase, inc);
    if (inc > slack && r.monotone) {
      r.monotone = false;
      r.first_violation = i - 1;
    }
  }
  return r;
}

/// CSV: n, lambda, phi, residual_u, summand, l2_residual, wallclock_us, then
/// any solver-specific columns. Floats carry 17 significant digits.
inline void write_trace_csv(std::ostream& os, const IterationTrace& t) {
  os << "n,lambda,phi,residual_u,summand,l2_residual,wallclock_us";
  for (const auto& c : t.extra_columns) os << ',' << c;
  os << '\n';
  for (const auto& r : t.records) {
    os << r.n << ',' << format_double(r.lambda) << ',' << format_double(r.phi) << ',' << format_double(r.residual_u)
       << ',' << format_double(r.summand) << ',' << format_double(r.l2_residual) << ','
       << format_double(r.wallclock_us);
    for (double e : r.extra) os << ',' << format_double(e);
    os << '\n';
  }
}

}  // namespace msplit

#endif  // MSPLIT_DRIVER_HPP
