#ifndef MSPLIT_OPERATORS_HPP
#define MSPLIT_OPERATORS_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>

#include "msplit/error.hpp"
#include "msplit/metric.hpp"

namespace msplit {

using VectorMap = std::function<Vector(const Vector&)>;

/// (gamma, U, x) -> J_{gamma U A} x
using ResolventFn = std::function<Vector(double, const Metric&, const Vector&)>;

/// (x, u, tol) -> whether u is in A x, up to tol
using MembershipFn = std::function<bool(const Vector&, const Vector&, double)>;

/// Single-valued map declared alpha-averaged on (H, U^{-1}) with U = metric_ctx.
/// alpha = 1 means merely nonexpansive.
struct AveragedMap {
  Index dim = 0;
  VectorMap apply;
  double alpha = 1.0;
  Metric metric_ctx = Metric::identity(1);
  std::string name;

  Vector operator()(const Vector& x) const { return apply(x); }
};

/// Maximally monotone operator, known through its resolvents.
struct MonotoneOp {
  Index dim = 0;
  std::string name;
  ResolventFn resolvent;
  MembershipFn membership;          // optional
  ResolventFn inverse_resolvent;    // optional closed form of J_{gamma U A^{-1}}

  bool has_membership() const noexcept { return static_cast<bool>(membership); }
};

/// beta-cocoercive single-valued operator.
struct CocoerciveOp {
  Index dim = 0;
  VectorMap apply;
  double beta = 1.0;
  std::string name;

  Vector operator()(const Vector& x) const { return apply(x); }
};

/// nu-strongly monotone D, represented by D^{-1} (which is nu-cocoercive).
struct StronglyMonotoneOp {
  Index dim = 0;
  VectorMap inverse_apply;
  double nu = 1.0;
  std::string name;

  CocoerciveOp inverse_as_cocoercive() const { return {dim, inverse_apply, nu, name + "^-1"}; }
};

/// Averagedness constant of T_1...T_m from the constants of the factors,
/// folding the two-operator formula (a1 + a2 - 2 a1 a2) / (1 - a1 a2) from
/// the left. Every constant must lie in ]0,1[.
inline double compose_constants(std::span<const double> alphas) {
  if (alphas.empty()) throw Error("compose_constants: empty list");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) {
      throw ParameterWindowError("averagedness constant", std::nullopt,
                                 "composition requires every constant in ]0,1[, got " + std::to_string(a));
    }
  }
  double acc = alphas[0];
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    const double a = alphas[i];
    acc = (acc + a - 2.0 * acc * a) / (1.0 - acc * a);
  }
  return acc;
}

inline double compose_constants(std::initializer_list<double> alphas) {
  return compose_constants(std::span<const double>(alphas.begin(), alphas.size()));
}

/// J_{gamma U A}(x).
inline Vector resolvent_step(const MonotoneOp& a, double gamma, const Metric& u, const Vector& x) {
  if (!(gamma > 0.0)) throw ParameterWindowError("gamma", std::nullopt, "resolvent step size must be positive");
  require_dim(a.dim, u.dim(), "resolvent_step metric");
  require_dim(a.dim, x.size(), "resolvent_step point");
  Vector p = a.resolvent(gamma, u, x);
  require_dim(a.dim, p.size(), "resolvent oracle output");
  return p;
}

/// J_{gamma U A} packaged as a 1/2-averaged map on (H, U^{-1}).
inline AveragedMap resolvent_map(const MonotoneOp& a, double gamma, const Metric& u) {
  if (!(gamma > 0.0)) throw ParameterWindowError("gamma", std::nullopt, "resolvent step size must be positive");
  require_dim(a.dim, u.dim(), "resolvent_map metric");
  return {a.dim, [a, gamma, u](const Vector& x) { return resolvent_step(a, gamma, u, x); }, 0.5, u,
          "J[" + a.name + "]"};
}

/// J_{gamma U A^{-1}}(v): the closed form when the operator has one,
/// otherwise the metric Moreau identity
///   J_{W A^{-1}} = Id - W J_{W^{-1} A} W^{-1},  W = gamma U.
inline Vector inverse_resolvent_step(const MonotoneOp& a, double gamma, const Metric& u, const Vector& v) {
  if (!(gamma > 0.0)) throw ParameterWindowError("gamma", std::nullopt, "resolvent step size must be positive");
  require_dim(a.dim, u.dim(), "inverse_resolvent_step metric");
  require_dim(a.dim, v.size(), "inverse_resolvent_step point");
  if (a.inverse_resolvent) return a.inverse_resolvent(gamma, u, v);
  const Metric w = u.scaled(gamma);
  return v - w.apply(a.resolvent(1.0, inverse(w), w.apply_inverse(v)));
}

/// u in A^{-1} p  <=>  p in A u.
inline bool inverse_membership(const MonotoneOp& a, const Vector& p, const Vector& u, double tol) {
  if (!a.membership) throw Error("operator '" + a.name + "' has no membership oracle");
  return a.membership(u, p, tol);
}

inline void check_forward_window(const CocoerciveOp& b, double gamma, const Metric& u) {
  if (!(gamma > 0.0)) throw ParameterWindowError("gamma window", std::nullopt, "forward step size must be positive");
  const double bound = 2.0 * b.beta / u.norm_ub();
  if (gamma > bound) {
    throw ParameterWindowError("gamma window", std::nullopt,
                               "forward step gamma=" + std::to_string(gamma) + " exceeds 2*beta/||U|| = " +
                                   std::to_string(bound));
  }
}

/// x - gamma U B x, with 0 < gamma <= 2 beta / ||U||.
inline Vector forward_step(const CocoerciveOp& b, double gamma, const Metric& u, const Vector& x) {
  check_forward_window(b, gamma, u);
  require_dim(b.dim, u.dim(), "forward_step metric");
  require_dim(b.dim, x.size(), "forward_step point");
  return x - gamma * u.apply(b.apply(x));
}

/// Id - gamma U B as a (gamma ||U|| / (2 beta))-averaged map on (H, U^{-1}).
inline AveragedMap forward_map(const CocoerciveOp& b, double gamma, const Metric& u) {
  check_forward_window(b, gamma, u);
  require_dim(b.dim, u.dim(), "forward_map metric");
  const double alpha = gamma * u.norm_ub() / (2.0 * b.beta);
  return {b.dim, [b, gamma, u](const Vector& x) { return Vector(x - gamma * u.apply(b.apply(x))); }, alpha, u,
          "Id-gU[" + b.name + "]"};
}

/// T_1 o T_2 with the composed constant. Both factors must share a metric.
inline AveragedMap compose(const AveragedMap& outer, const AveragedMap& inner) {
  require_dim(outer.dim, inner.dim, "compose");
  const double alpha = compose_constants({outer.alpha, inner.alpha});
  return {outer.dim, [outer, inner](const Vector& x) { return outer.apply(inner.apply(x)); }, alpha,
          outer.metric_ctx, outer.name + "*" + inner.name};
}

/// R = (1 - 1/alpha) Id + (1/alpha) T; nonexpansive whenever T is alpha-averaged.
inline AveragedMap reflector(const AveragedMap& t) {
  const double inv = 1.0 / t.alpha;
  return {t.dim, [t, inv](const Vector& x) { return Vector((1.0 - inv) * x + inv * t.apply(x)); }, 1.0,
          t.metric_ctx, "R[" + t.name + "]"};
}

/// Id + mu (T - Id). Carries constant mu * phi, where phi is a (possibly > 1)
/// averagedness-type constant of T supplied by the caller.
inline AveragedMap relax(const AveragedMap& t, double mu, double phi) {
  return {t.dim, [t, mu](const Vector& x) { return Vector(x + mu * (t.apply(x) - x)); }, mu * phi, t.metric_ctx,
          "relax[" + t.name + "]"};
}

struct PropertyReport {
  std::size_t samples = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::size_t worst_index = 0;
  bool passed = true;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent seeded pair (x, y) for sample i; order of evaluation does not
/// matter.
inline std::pair<Vector, Vector> sample_pair(Index dim, std::uint64_t seed, std::size_t i, double scale) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i))));
  std::normal_distribution<double> g(0.0, 1.0);
  Vector x(dim), y(dim);
  for (Index k = 0; k < dim; ++k) x(k) = scale * g(rng);
  for (Index k = 0; k < dim; ++k) y(k) = scale * g(rng);
  return {std::move(x), std::move(y)};
}

inline void record(PropertyReport& r, std::size_t i, double margin, double tol) {
  ++r.samples;
  if (std::isnan(margin) || margin < r.worst_margin) {
    r.worst_margin = margin;
    r.worst_index = i;
  }
  if (!(margin >= -tol)) r.passed = false;
}

}  // namespace detail

/// Samples pairs and evaluates, in the metric_ctx geometry ||.||_{U^{-1}},
///   ||x-y||^2 - ((1-a)/a) ||(Id-T)x - (Id-T)y||^2 - ||Tx-Ty||^2 >= -tol.
/// Samples are standard Gaussian times `scale` (default: condition number of
/// the metric).
inline PropertyReport check_averaged(const AveragedMap& t, std::size_t samples, double tol, std::uint64_t seed,
                                     std::optional<double> scale = std::nullopt) {
  if (samples == 0) throw Error("check_averaged: samples must be positive");
  const Metric& u = t.metric_ctx;
  const double s = scale.value_or(u.norm_ub() / u.alpha_lb());
  const double coeff = (1.0 - t.alpha) / t.alpha;
  PropertyReport r;
  for (std::size_t i = 0; i < samples; ++i) {
    auto [x, y] = detail::sample_pair(t.dim, seed, i, s);
    const Vector tx = t.apply(x);
    const Vector ty = t.apply(y);
    const double lhs = u.inverse_norm_sq(tx - ty);
    const double rhs = u.inverse_norm_sq(x - y) - coeff * u.inverse_norm_sq((x - tx) - (y - ty));
    detail::record(r, i, rhs - lhs, tol);
  }
  return r;
}

/// <x-y, Bx-By> - beta ||Bx-By||^2 >= -tol on sampled pairs.
inline PropertyReport check_cocoercive(const CocoerciveOp& b, std::size_t samples, double tol, std::uint64_t seed,
                                       double scale = 1.0) {
  if (samples == 0) throw Error("check_cocoercive: samples must be positive");
  PropertyReport r;
  for (std::size_t i = 0; i < samples; ++i) {
    auto [x, y] = detail::sample_pair(b.dim, seed, i, scale);
    const Vector d = b.apply(x) - b.apply(y);
    detail::record(r, i, (x - y).dot(d) - b.beta * d.squaredNorm(), tol);
  }
  return r;
}

// Shared trivial operators.

inline MonotoneOp make_zero_operator(Index dim) {
  MonotoneOp a;
  a.dim = dim;
  a.name = "zero";
  a.resolvent = [](double, const Metric&, const Vector& x) { return x; };
  a.membership = [](const Vector&, const Vector& u, double tol) { return u.lpNorm<Eigen::Infinity>() <= tol; };
  // A^{-1} is the normal cone of {0}; its resolvent is the constant 0.
  a.inverse_resolvent = [dim](double, const Metric&, const Vector&) { return Vector(Vector::Zero(dim)); };
  return a;
}

inline CocoerciveOp make_zero_cocoercive(Index dim, double beta = 1.0) {
  return {dim, [dim](const Vector&) { return Vector(Vector::Zero(dim)); }, beta, "zero"};
}

/// B = s * Id is (1/s)-cocoercive.
inline CocoerciveOp make_scaled_identity_cocoercive(Index dim, double s) {
  if (!(s > 0.0)) throw Error("scaled identity: scale must be positive");
  return {dim, [s](const Vector& x) { return Vector(s * x); }, 1.0 / s, "id"};
}

}  // namespace msplit

#endif  // MSPLIT_OPERATORS_HPP
