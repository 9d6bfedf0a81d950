#ifndef MSPLIT_PD_HPP
#define MSPLIT_PD_HPP

// Overrelaxed variable-metric primal-dual splitting for
//
//   z in A x + sum_i L_i^* ((B_i [] D_i)(L_i x - r_i)) + C x,
//
// with dual inclusions v_i in (B_i [] D_i)(L_i x - r_i). The iteration is a
// forward-backward step on the product space K = H + G_1 + ... + G_m in the
// metric V_n^{-1}, where V_n(x, v) = (U_n^{-1} x - sum L_i^* v_i,
// (-L_i x + U_{i,n}^{-1} v_i)_i); the `product` namespace exposes that
// construction for verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "msplit/driver.hpp"
#include "msplit/error.hpp"
#include "msplit/fb.hpp"
#include "msplit/metric.hpp"
#include "msplit/operators.hpp"
#include "msplit/report.hpp"

namespace msplit {

/// Bounded linear map H -> G with an explicitly implemented adjoint.
struct LinearMap {
  Index in_dim = 0;
  Index out_dim = 0;
  VectorMap apply;
  VectorMap adjoint;
  std::string name;

  static LinearMap from_matrix(Matrix m, std::string name = "matrix") {
    LinearMap l;
    l.in_dim = m.cols();
    l.out_dim = m.rows();
    l.apply = [m](const Vector& x) { return Vector(m * x); };
    l.adjoint = [m](const Vector& v) { return Vector(m.transpose() * v); };
    l.name = std::move(name);
    return l;
  }

  static LinearMap identity(Index dim) {
    return {dim, dim, [](const Vector& x) { return x; }, [](const Vector& v) { return v; }, "id"};
  }

  /// Dense matrix of the forward map, column by column.
  Matrix to_dense() const {
    Matrix m(out_dim, in_dim);
    for (Index j = 0; j < in_dim; ++j) m.col(j) = apply(Vector::Unit(in_dim, j));
    return m;
  }
};

struct DualBlock {
  Vector r;
  MonotoneOp b;          // B_i, through the resolvent of B_i^{-1}
  StronglyMonotoneOp d;  // D_i, through D_i^{-1}
  LinearMap l;
};

struct CompositeProblem {
  Vector z;
  MonotoneOp a;
  CocoerciveOp c;  // constant mu_c
  std::vector<DualBlock> blocks;
  std::optional<Vector> known_primal;
  std::optional<std::vector<Vector>> known_dual;

  Index dim() const noexcept { return a.dim; }
  std::size_t m() const noexcept { return blocks.size(); }

  /// beta = min{mu_c, nu_1, ..., nu_m}
  double beta() const {
    double b = c.beta;
    for (const auto& blk : blocks) b = std::min(b, blk.d.nu);
    return b;
  }
};

/// Dimension consistency, beta > 0, L_i != 0, and the adjoint identity
/// <L x, v> = <x, L^* v> on seeded random pairs (relative 1e-12).
inline ValidationReport validate_problem(const CompositeProblem& p, std::uint64_t seed = 0, std::size_t samples = 20) {
  ValidationReport rep;
  const Index n = p.dim();
  if (p.z.size() != n || p.c.dim != n) rep.fail("dimension", std::nullopt, "z, A and C must share a dimension");
  if (p.blocks.empty()) rep.fail("dimension", std::nullopt, "at least one dual block is required");
  if (!(p.beta() > 0.0)) rep.fail("beta", std::nullopt, "beta = min{mu, nu_i} must be positive");
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& blk = p.blocks[i];
    const std::string tag = "block " + std::to_string(i + 1);
    if (blk.l.in_dim != n || blk.l.out_dim != blk.b.dim || blk.d.dim != blk.b.dim || blk.r.size() != blk.b.dim) {
      rep.fail("dimension", std::nullopt, tag + ": inconsistent dimensions");
      continue;
    }
    std::mt19937_64 rng(detail::splitmix64(seed + i));
    std::normal_distribution<double> g;
    bool nonzero = false;
    for (std::size_t k = 0; k < samples; ++k) {
      Vector x(n), v(blk.l.out_dim);
      for (Index j = 0; j < n; ++j) x(j) = g(rng);
      for (Index j = 0; j < v.size(); ++j) v(j) = g(rng);
      const Vector lx = blk.l.apply(x);
      const Vector ltv = blk.l.adjoint(v);
      nonzero = nonzero || lx.cwiseAbs().maxCoeff() > 0.0;
      const double lhs = lx.dot(v);
      const double rhs = x.dot(ltv);
      const double scale = std::max(1.0, lx.norm() * v.norm() + x.norm() * ltv.norm());
      if (std::abs(lhs - rhs) > 1e-12 * scale) {
        rep.fail("adjoint", std::nullopt, tag + ": <Lx,v> and <x,L*v> differ by " + format_double(std::abs(lhs - rhs)));
        break;
      }
    }
    if (!nonzero) rep.fail("adjoint", std::nullopt, tag + ": L_i must be nonzero");
  }
  return rep;
}

enum class ZetaVariant { as_printed, delta_numerator };

inline const char* to_string(ZetaVariant v) {
  return v == ZetaVariant::as_printed ? "as_printed" : "delta_numerator";
}

/// delta_n = (sqrt(sum_i ||sqrt(U_i) L_i sqrt(U)||^2))^{-1} - 1, spectral
/// norms of the dense products.
inline double compute_delta(const Metric& u, const std::vector<Metric>& duals, const std::vector<LinearMap>& ls) {
  if (duals.size() != ls.size() || ls.empty()) throw DimensionError("compute_delta: one dual metric per linear map");
  const Matrix su = sqrt(u).to_dense();
  double acc = 0.0;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    require_dim(u.dim(), ls[i].in_dim, "compute_delta L_i domain");
    require_dim(duals[i].dim(), ls[i].out_dim, "compute_delta L_i range");
    const Matrix prod = sqrt(duals[i]).to_dense() * ls[i].to_dense() * su;
    Eigen::JacobiSVD<Matrix> svd(prod);
    const double s = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    acc += s * s;
  }
  if (!(acc > 0.0)) throw Error("compute_delta: all L_i are zero");
  return 1.0 / std::sqrt(acc) - 1.0;
}

/// as_printed:      (1+delta) / ((1+delta) max norms)
/// delta_numerator: delta / ((1+delta) max norms)
inline double compute_zeta(double delta, const std::vector<double>& norms, ZetaVariant variant) {
  if (!(delta > -1.0)) throw ParameterWindowError("delta range", std::nullopt, "delta must exceed -1");
  if (norms.empty()) throw Error("compute_zeta: no metric norms");
  double mx = 0.0;
  for (double v : norms) {
    if (!(v > 0.0)) throw Error("compute_zeta: metric norms must be positive");
    mx = std::max(mx, v);
  }
  if (variant == ZetaVariant::as_printed) return (1.0 + delta) / ((1.0 + delta) * mx);
  if (!(delta > 0.0)) {
    throw ParameterWindowError("delta nonpositive", std::nullopt,
                               "delta=" + format_double(delta) + " leaves no admissible zeta");
  }
  return delta / ((1.0 + delta) * mx);
}

struct PDParams {
  MetricSequence primal_metrics;
  std::vector<MetricSequence> dual_metrics;
  double epsilon = 1e-2;
  /// Empty: midpoint of [eps, 1 + (1-eps)(1 - 1/(2 zeta_n beta))].
  ScalarSeq lambda_at;
  VectorSeq a_at;
  VectorSeq c_at;
  std::vector<VectorSeq> b_at;
  std::vector<VectorSeq> d_at;
  ZetaVariant zeta_variant = ZetaVariant::delta_numerator;
  bool allow_violations = false;
};

/// Per-iteration parameters of the primal-dual method.
struct PDStep {
  double delta = 0.0;
  double zeta = 0.0;
  double lambda = 0.0;
  double lambda_top = 0.0;
  double phi = 0.0;  // 2 beta / (4 beta - 1/zeta), constant of the product-space map
};

inline double pd_lambda_top(double zeta, double beta, double epsilon) {
  return 1.0 + (1.0 - epsilon) * (1.0 - 1.0 / (2.0 * zeta * beta));
}

namespace detail {

inline std::vector<LinearMap> linear_maps(const CompositeProblem& p) {
  std::vector<LinearMap> ls;
  for (const auto& b : p.blocks) ls.push_back(b.l);
  return ls;
}

/// delta and zeta at index n, without throwing on a nonpositive delta.
inline std::pair<double, std::optional<double>> pd_delta_zeta(const CompositeProblem& p, const PDParams& params,
                                                              std::size_t n) {
  const Metric u = params.primal_metrics.at(n);
  std::vector<Metric> duals;
  std::vector<double> norms{u.norm_ub()};
  for (const auto& s : params.dual_metrics) {
    duals.push_back(s.at(n));
    norms.push_back(duals.back().norm_ub());
  }
  const double delta = compute_delta(u, duals, linear_maps(p));
  if (params.zeta_variant == ZetaVariant::delta_numerator && !(delta > 0.0)) return {delta, std::nullopt};
  if (!(delta > -1.0)) return {delta, std::nullopt};
  return {delta, compute_zeta(delta, norms, params.zeta_variant)};
}

}  // namespace detail

/// delta_n, zeta_n, lambda_n at index n. Throws when delta_n rules out zeta_n.
inline PDStep pd_step_parameters(const CompositeProblem& p, const PDParams& params, std::size_t n) {
  const auto [delta, zeta] = detail::pd_delta_zeta(p, params, n);
  if (!zeta) {
    throw ParameterWindowError("delta nonpositive", n, "delta=" + format_double(delta) + " leaves no admissible zeta");
  }
  PDStep s;
  s.delta = delta;
  s.zeta = *zeta;
  const double beta = p.beta();
  s.lambda_top = pd_lambda_top(s.zeta, beta, params.epsilon);
  s.lambda = params.lambda_at ? params.lambda_at(n) : 0.5 * (params.epsilon + s.lambda_top);
  const double inv_norm = 1.0 / s.zeta;
  s.phi = inv_norm < 4.0 * beta ? 2.0 * beta / (4.0 * beta - inv_norm) : std::numeric_limits<double>::infinity();
  return s;
}

/// epsilon range, delta/zeta/lambda windows and monotonicity of every metric
/// sequence over the first `horizon` indices.
inline ValidationReport validate_pd(const CompositeProblem& p, const PDParams& params, std::size_t horizon) {
  ValidationReport rep = validate_problem(p);
  if (!rep.passed()) return rep;
  const double beta = p.beta();
  const double eps = params.epsilon;
  if (params.dual_metrics.size() != p.m()) {
    rep.fail("dimension", std::nullopt, "one dual metric sequence per block is required");
    return rep;
  }
  if (params.primal_metrics.dim() != p.dim()) rep.fail("dimension", std::nullopt, "primal metric dimension");
  for (std::size_t i = 0; i < p.m(); ++i) {
    if (params.dual_metrics[i].dim() != p.blocks[i].b.dim) rep.fail("dimension", std::nullopt, "dual metric dimension");
  }
  if (!rep.passed()) return rep;
  if (!(eps > 0.0 && eps < std::min(1.0, beta))) {
    rep.fail("epsilon range", std::nullopt,
             "epsilon=" + format_double(eps) + " must lie in ]0, min{1, beta}[ with beta=" + format_double(beta));
  }
  const double zeta_min = 1.0 / (2.0 * beta - eps);
  for (std::size_t n = 0; n < horizon; ++n) {
    const auto [delta, zeta] = detail::pd_delta_zeta(p, params, n);
    if (!zeta) {
      rep.fail("delta nonpositive", n, "delta=" + format_double(delta) + " leaves no admissible zeta");
      continue;
    }
    if (!(*zeta >= zeta_min)) {
      rep.fail("zeta window", n,
               "zeta=" + format_double(*zeta) + " below 1/(2 beta - epsilon) = " + format_double(zeta_min));
    }
    const double top = pd_lambda_top(*zeta, beta, eps);
    const double lambda = params.lambda_at ? params.lambda_at(n) : 0.5 * (eps + top);
    if (!(lambda >= eps && lambda <= top)) {
      rep.fail("lambda window", n,
               "lambda=" + format_double(lambda) + " outside [epsilon, 1+(1-epsilon)(1-1/(2 zeta beta))] = [" +
                   format_double(eps) + ", " + format_double(top) + "]");
    }
  }
  auto check_monotone = [&](const MetricSequence& seq, const std::string& tag) {
    const std::size_t len = std::min(horizon, std::max<std::size_t>(1, seq.horizon()));
    for (std::size_t n = 0; n + 1 < len; ++n) {
      const Metric a = seq.at(n + 1);
      const Metric b = seq.at(n);
      if (!loewner_geq(a, b)) rep.fail("metric ordering", n, tag + ": U_{n+1} >= U_n does not hold");
    }
  };
  check_monotone(params.primal_metrics, "primal metric");
  for (std::size_t i = 0; i < p.m(); ++i) check_monotone(params.dual_metrics[i], "dual metric " + std::to_string(i + 1));
  rep.notes.push_back("z in ran(A + sum L_i^*(B_i [] D_i)(L_i . - r_i) + C): assumed");
  return rep;
}

struct KKTReport {
  double primal = 0.0;
  std::vector<double> dual;

  double max() const {
    double m = primal;
    for (double d : dual) m = std::max(m, d);
    return m;
  }
};

/// primal: ||J_A(x + z - sum L_i^* v_i - C x) - x||, zero iff z - sum L_i^* v_i in (A + C) x
/// dual_i: ||J_{B_i^{-1}}(v_i + L_i x - r_i - D_i^{-1} v_i) - v_i||, zero iff v_i in (B_i [] D_i)(L_i x - r_i)
inline KKTReport pd_residuals(const CompositeProblem& p, const Vector& x, const std::vector<Vector>& v) {
  require_dim(p.dim(), x.size(), "pd_residuals x");
  if (v.size() != p.m()) throw DimensionError("pd_residuals: one dual vector per block");
  KKTReport r;
  Vector g = p.z - p.c(x);
  for (std::size_t i = 0; i < p.m(); ++i) g -= p.blocks[i].l.adjoint(v[i]);
  const Metric id = Metric::identity(p.dim());
  r.primal = (resolvent_step(p.a, 1.0, id, Vector(x + g)) - x).norm();
  for (std::size_t i = 0; i < p.m(); ++i) {
    const auto& blk = p.blocks[i];
    require_dim(blk.b.dim, v[i].size(), "pd_residuals v_i");
    const Vector w = v[i] + blk.l.apply(x) - blk.r - blk.d.inverse_apply(v[i]);
    r.dual.push_back((inverse_resolvent_step(blk.b, 1.0, Metric::identity(blk.b.dim), w) - v[i]).norm());
  }
  return r;
}

namespace product {

inline Vector pack(const Vector& x, const std::vector<Vector>& v) {
  Index len = x.size();
  for (const auto& vi : v) len += vi.size();
  Vector out(len);
  out.head(x.size()) = x;
  Index off = x.size();
  for (const auto& vi : v) {
    out.segment(off, vi.size()) = vi;
    off += vi.size();
  }
  return out;
}

inline std::pair<Vector, std::vector<Vector>> unpack(const CompositeProblem& p, const Vector& xt) {
  Vector x = xt.head(p.dim());
  std::vector<Vector> v;
  Index off = p.dim();
  for (const auto& blk : p.blocks) {
    v.push_back(xt.segment(off, blk.b.dim));
    off += blk.b.dim;
  }
  return {std::move(x), std::move(v)};
}

/// Dense V = [[U^{-1}, -L^*], [-L, U_i^{-1}]].
inline Matrix v_tilde(const CompositeProblem& p, const Metric& u, const std::vector<Metric>& duals) {
  Index len = p.dim();
  for (const auto& blk : p.blocks) len += blk.b.dim;
  Matrix v = Matrix::Zero(len, len);
  v.topLeftCorner(p.dim(), p.dim()) = inverse(u).to_dense();
  Index off = p.dim();
  for (std::size_t i = 0; i < p.m(); ++i) {
    const Index gi = p.blocks[i].b.dim;
    const Matrix l = p.blocks[i].l.to_dense();
    v.block(off, 0, gi, p.dim()) = -l;
    v.block(0, off, p.dim(), gi) = -l.transpose();
    v.block(off, off, gi, gi) = inverse(duals[i]).to_dense();
    off += gi;
  }
  return v;
}

/// B(x, v) = (C x, D_1^{-1} v_1, ..., D_m^{-1} v_m)
inline Vector b_tilde(const CompositeProblem& p, const Vector& xt) {
  auto [x, v] = unpack(p, xt);
  std::vector<Vector> dv;
  for (std::size_t i = 0; i < p.m(); ++i) dv.push_back(p.blocks[i].d.inverse_apply(v[i]));
  return pack(p.c(x), dv);
}

/// J_{V^{-1} A}(xt - V^{-1} B xt) from the dense V: a linear solve for the
/// forward step, then block forward substitution through the lower
/// triangular V + S.
inline Vector fb_map(const CompositeProblem& p, const Metric& u, const std::vector<Metric>& duals, const Vector& xt) {
  const Matrix v = v_tilde(p, u, duals);
  const Vector w = xt - v.partialPivLu().solve(b_tilde(p, xt));
  Vector g = v * w;
  g.head(p.dim()) += p.z;
  Index off = p.dim();
  for (const auto& blk : p.blocks) {
    g.segment(off, blk.b.dim) -= blk.r;
    off += blk.b.dim;
  }
  const Vector pp = resolvent_step(p.a, 1.0, u, u.apply(g.head(p.dim())));
  std::vector<Vector> qs;
  off = p.dim();
  for (std::size_t i = 0; i < p.m(); ++i) {
    const auto& blk = p.blocks[i];
    const Vector arg = g.segment(off, blk.b.dim) + 2.0 * blk.l.apply(pp);
    qs.push_back(inverse_resolvent_step(blk.b, 1.0, duals[i], duals[i].apply(arg)));
    off += blk.b.dim;
  }
  return pack(pp, qs);
}

/// Membership residuals of yt = J_{V^{-1} A}(xt - V^{-1} B xt), i.e. of
/// V(xt - yt) - B xt in A yt, checked through p = J_A(p + u) for each block
/// (unit step, Euclidean metric). Entry 0 is the primal block.
inline std::vector<double> membership_residuals(const CompositeProblem& p, const Metric& u,
                                                const std::vector<Metric>& duals, const Vector& xt,
                                                const Vector& yt) {
  auto [x, v] = unpack(p, xt);
  auto [pp, q] = unpack(p, yt);
  std::vector<double> out;
  Vector ua = u.apply_inverse(x - pp) - p.c(x) + p.z;
  for (std::size_t i = 0; i < p.m(); ++i) ua -= p.blocks[i].l.adjoint(v[i]);
  out.push_back((resolvent_step(p.a, 1.0, Metric::identity(p.dim()), Vector(pp + ua)) - pp).norm());
  for (std::size_t i = 0; i < p.m(); ++i) {
    const auto& blk = p.blocks[i];
    const Vector ub = duals[i].apply_inverse(v[i] - q[i]) + blk.l.apply(Vector(2.0 * pp - x)) -
                      blk.d.inverse_apply(v[i]) - blk.r;
    out.push_back(
        (inverse_resolvent_step(blk.b, 1.0, Metric::identity(blk.b.dim), Vector(q[i] + ub)) - q[i]).norm());
  }
  return out;
}

}  // namespace product

struct PDResult {
  IterationTrace trace;
  Vector x_final;
  std::vector<Vector> v_final;
  ValidationReport validation;
  std::vector<PDStep> steps;
  KKTReport final_kkt;
};

/// Runs the primal-dual loop. Trace records carry product-space quantities:
/// residual_u is ||(p_n, q_n) - (x_n, v_n)||_{V_n} of the error-free step,
/// x/y hold the packed vectors, and the extra columns are the primal and
/// per-block dual KKT residuals at (x_n, v_n).
inline PDResult solve_pd(const CompositeProblem& p, const PDParams& params, const Vector& x0,
                         const std::vector<Vector>& v0, const StopRule& stop, const RunOptions& opts = {}) {
  require_dim(p.dim(), x0.size(), "solve_pd x0");
  if (v0.size() != p.m()) throw DimensionError("solve_pd: one initial dual vector per block");
  for (std::size_t i = 0; i < p.m(); ++i) require_dim(p.blocks[i].b.dim, v0[i].size(), "solve_pd v0");
  if (stop.max_iter == 0) throw Error("solve_pd: max_iter must be positive");
  const ValidationReport problem_rep = validate_problem(p);
  if (!problem_rep.passed()) {
    const Issue& i = *problem_rep.first_issue();
    throw ParameterWindowError(i.check, i.n, i.message);
  }
  PDResult out;
  const std::size_t horizon =
      opts.validation_horizon ? opts.validation_horizon : std::min<std::size_t>(stop.max_iter, 1000);
  out.validation = validate_pd(p, params, horizon);
  if (!out.validation.passed() && !params.allow_violations) {
    const Issue& i = *out.validation.first_issue();
    throw ParameterWindowError(i.check, i.n, i.message);
  }
  const std::size_t m = p.m();
  const double beta = p.beta();
  IterationTrace& trace = out.trace;
  trace.validation = out.validation;
  trace.extra_columns.push_back("primal_residual");
  for (std::size_t i = 0; i < m; ++i) trace.extra_columns.push_back("dual_residual_" + std::to_string(i + 1));

  // delta_n and zeta_n only change while some metric sequence is still moving.
  std::size_t frozen_after = params.primal_metrics.is_generated() ? SIZE_MAX : params.primal_metrics.horizon();
  for (const auto& s : params.dual_metrics) {
    frozen_after = s.is_generated() ? SIZE_MAX : std::max(frozen_after, s.horizon());
  }
  std::optional<PDStep> frozen;

  Vector x = x0;
  std::vector<Vector> v = v0;
  const Vector xt0 = product::pack(x0, v0);
  const double threshold =
      stop.residual_tol ? *stop.residual_tol * (stop.relative_to_x0 ? 1.0 + xt0.norm() : 1.0) : -1.0;
  std::optional<Vector> ref;
  if (opts.reference) {
    require_dim(xt0.size(), opts.reference->size(), "solve_pd reference");
    ref = *opts.reference;
  }

  auto forward_backward = [&](const Metric& u, const std::vector<Metric>& duals, const Vector& c_err,
                              const Vector& a_err, const std::vector<Vector>& b_err,
                              const std::vector<Vector>& d_err, std::size_t n) {
    Vector g = p.c(x) - p.z;
    for (std::size_t i = 0; i < m; ++i) g += p.blocks[i].l.adjoint(v[i]);
    if (c_err.size()) g += c_err;
    Vector pp = resolvent_step(p.a, 1.0, u, Vector(x - u.apply(g)));
    if (a_err.size()) pp += a_err;
    const Vector y = 2.0 * pp - x;
    std::vector<Vector> q(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& blk = p.blocks[i];
      Vector w = blk.l.apply(y) - blk.d.inverse_apply(v[i]) - blk.r;
      if (d_err[i].size()) w -= d_err[i];
      q[i] = inverse_resolvent_step(blk.b, 1.0, duals[i], Vector(v[i] + duals[i].apply(w)));
      if (b_err[i].size()) q[i] += b_err[i];
    }
    detail::require_finite(pp, n, "p_n");
    for (const auto& qi : q) detail::require_finite(qi, n, "q_n");
    return std::make_pair(std::move(pp), std::move(q));
  };

  auto v_norm_sq = [&](const Metric& u, const std::vector<Metric>& duals, const Vector& dx,
                       const std::vector<Vector>& dv) {
    double s = u.inverse_norm_sq(dx);
    for (std::size_t i = 0; i < m; ++i) {
      s += duals[i].inverse_norm_sq(dv[i]) - 2.0 * p.blocks[i].l.apply(dx).dot(dv[i]);
    }
    return std::max(0.0, s);
  };

  const std::vector<Vector> none(m);
  for (std::size_t n = 0;; ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    const Metric u = params.primal_metrics.at(n);
    std::vector<Metric> duals;
    for (const auto& s : params.dual_metrics) duals.push_back(s.at(n));

    PDStep step;
    if (frozen && n >= frozen_after) {
      step = *frozen;
      step.lambda = params.lambda_at ? params.lambda_at(n) : 0.5 * (params.epsilon + step.lambda_top);
    } else {
      step = pd_step_parameters(p, params, n);
      if (n + 1 >= frozen_after) frozen = step;
    }
    out.steps.push_back(step);

    const Vector a_err = params.a_at ? params.a_at(n) : Vector();
    const Vector c_err = params.c_at ? params.c_at(n) : Vector();
    std::vector<Vector> b_err(m), d_err(m);
    bool any_error = a_err.size() || c_err.size();
    for (std::size_t i = 0; i < m; ++i) {
      if (i < params.b_at.size() && params.b_at[i]) b_err[i] = params.b_at[i](n);
      if (i < params.d_at.size() && params.d_at[i]) d_err[i] = params.d_at[i](n);
      any_error = any_error || b_err[i].size() || d_err[i].size();
    }

    auto [pc, qc] = forward_backward(u, duals, Vector(), Vector(), none, none, n);
    std::vector<Vector> dv(m);
    for (std::size_t i = 0; i < m; ++i) dv[i] = qc[i] - v[i];
    const Vector dx = pc - x;

    IterationRecord rec;
    rec.n = n;
    rec.lambda = step.lambda;
    rec.phi = step.phi;
    rec.residual_u = std::sqrt(v_norm_sq(u, duals, dx, dv));
    rec.l2_residual = product::pack(dx, dv).norm();
    rec.summand = step.lambda * (1.0 / step.phi - step.lambda) * rec.residual_u * rec.residual_u;
    rec.window_ok = step.lambda >= params.epsilon && step.lambda <= step.lambda_top * (1.0 + 1e-12) &&
                    step.zeta >= 1.0 / (2.0 * beta - params.epsilon);
    if (!rec.window_ok && !params.allow_violations) {
      throw ParameterWindowError("lambda window", n, "lambda=" + format_double(step.lambda));
    }
    const KKTReport kkt = pd_residuals(p, x, v);
    rec.extra.push_back(kkt.primal);
    rec.extra.insert(rec.extra.end(), kkt.dual.begin(), kkt.dual.end());
    const Vector xt = product::pack(x, v);
    if (ref) {
      auto [rx, rv] = product::unpack(p, *ref);
      std::vector<Vector> ev(m);
      for (std::size_t i = 0; i < m; ++i) ev[i] = v[i] - rv[i];
      rec.fejer = v_norm_sq(u, duals, Vector(x - rx), ev);
    }

    Vector pn = pc;
    std::vector<Vector> qn = qc;
    if (any_error) std::tie(pn, qn) = forward_backward(u, duals, c_err, a_err, b_err, d_err, n);
    if (opts.store_iterates) {
      rec.x = xt;
      rec.y = product::pack(pn, qn);
    }

    const bool converged = threshold >= 0.0 && rec.residual_u <= threshold;
    if (!converged) {
      x += step.lambda * (pn - x);
      for (std::size_t i = 0; i < m; ++i) v[i] += step.lambda * (qn[i] - v[i]);
      detail::require_finite(x, n, "x_{n+1}");
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
    if (n + 1 >= stop.max_iter) {
      trace.reason = StopReason::max_iter;
      break;
    }
  }
  trace.x_final = product::pack(x, v);
  trace.iterates_cauchy = trace.reason == StopReason::residual;
  out.x_final = x;
  out.v_final = v;
  out.final_kkt = pd_residuals(p, x, v);
  return out;
}

}  // namespace msplit

#endif  // MSPLIT_PD_HPP
