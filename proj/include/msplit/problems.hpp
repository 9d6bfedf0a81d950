#ifndef MSPLIT_PROBLEMS_HPP
#define MSPLIT_PROBLEMS_HPP

// Concrete operators with closed-form resolvents, and seeded problem
// instances whose reference solutions come from deliberately simple solvers
// (cyclic coordinate descent, projected gradient) that share no code with
// the splitting algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <json.hpp>

#include "msplit/error.hpp"
#include "msplit/fb.hpp"
#include "msplit/metric.hpp"
#include "msplit/operators.hpp"
#include "msplit/pd.hpp"

namespace msplit {

namespace detail {

inline const Vector& diagonal_or_throw(const Metric& u, const std::string& who) {
  if (!u.is_diagonal()) throw UnsupportedMetric(who + ": closed form needs a diagonal metric");
  return u.diagonal_entries();
}

inline double isotropic_or_throw(const Metric& u, const std::string& who) {
  const auto s = u.isotropic_scale();
  if (!s) throw UnsupportedMetric(who + ": closed form needs a scalar multiple of the identity");
  return *s;
}

inline double soft(double x, double t) { return x > t ? x - t : (x < -t ? x + t : 0.0); }

}  // namespace detail

/// A = d(tau ||.||_1). J_{gamma U A} soft-thresholds coordinate k at
/// gamma U_kk tau; J_{gamma U A^{-1}} is the clamp to [-tau, tau].
inline MonotoneOp make_prox_l1(Index dim, double tau) {
  if (!(tau > 0.0)) throw Error("make_prox_l1: tau must be positive");
  MonotoneOp a;
  a.dim = dim;
  a.name = "l1";
  a.resolvent = [tau](double gamma, const Metric& u, const Vector& x) {
    const Vector& d = detail::diagonal_or_throw(u, "l1 resolvent");
    Vector p(x.size());
    for (Index k = 0; k < x.size(); ++k) p(k) = detail::soft(x(k), gamma * d(k) * tau);
    return p;
  };
  a.inverse_resolvent = [tau](double, const Metric& u, const Vector& v) {
    detail::diagonal_or_throw(u, "l1 inverse resolvent");
    return Vector(v.cwiseMax(-tau).cwiseMin(tau));
  };
  a.membership = [tau](const Vector& x, const Vector& w, double tol) {
    for (Index k = 0; k < x.size(); ++k) {
      if (x(k) > 0.0 ? std::abs(w(k) - tau) > tol : x(k) < 0.0 ? std::abs(w(k) + tau) > tol : std::abs(w(k)) > tau + tol) {
        return false;
      }
    }
    return true;
  };
  return a;
}

struct Box {
  Vector lo, hi;
};
struct Halfspace {
  Vector a;
  double b = 0.0;
};
struct Ball {
  Vector c;
  double r = 1.0;
};
using ConvexSet = std::variant<Box, Halfspace, Ball>;

inline Vector project(const ConvexSet& set, const Vector& x) {
  if (const auto* s = std::get_if<Box>(&set)) return x.cwiseMax(s->lo).cwiseMin(s->hi);
  if (const auto* s = std::get_if<Halfspace>(&set)) {
    const double excess = s->a.dot(x) - s->b;
    return excess > 0.0 ? Vector(x - (excess / s->a.squaredNorm()) * s->a) : x;
  }
  const auto& s = std::get<Ball>(set);
  const Vector d = x - s.c;
  const double nd = d.norm();
  return nd > s.r ? Vector(s.c + (s.r / nd) * d) : x;
}

/// Normal cone of a box, halfspace or ball. Box resolvents accept diagonal
/// metrics; halfspace and ball resolvents accept scaled identities only.
inline MonotoneOp make_projection(ConvexSet set) {
  MonotoneOp a;
  if (const auto* s = std::get_if<Box>(&set)) {
    if (s->lo.size() != s->hi.size()) throw DimensionError("box: bound sizes differ");
    if ((s->lo.array() > s->hi.array()).any()) throw Error("box: lo must not exceed hi");
    a.dim = s->lo.size();
    a.name = "box";
  } else if (const auto* s = std::get_if<Halfspace>(&set)) {
    if (!(s->a.norm() > 0.0)) throw Error("halfspace: normal vector must be nonzero");
    a.dim = s->a.size();
    a.name = "halfspace";
  } else {
    const auto& ball = std::get<Ball>(set);
    if (!(ball.r > 0.0)) throw Error("ball: radius must be positive");
    a.dim = ball.c.size();
    a.name = "ball";
  }
  const bool box = std::holds_alternative<Box>(set);
  a.resolvent = [set, box, name = a.name](double, const Metric& u, const Vector& x) {
    if (box) {
      detail::diagonal_or_throw(u, name + " resolvent");
    } else {
      detail::isotropic_or_throw(u, name + " resolvent");
    }
    return project(set, x);
  };
  // w in N_C(x): x in C and <w, y - x> <= 0 for every y in C.
  a.membership = [set](const Vector& x, const Vector& w, double tol) {
    if ((project(set, x) - x).norm() > tol) return false;
    if (const auto* s = std::get_if<Box>(&set)) {
      for (Index k = 0; k < x.size(); ++k) {
        const bool at_lo = x(k) <= s->lo(k) + tol;
        const bool at_hi = x(k) >= s->hi(k) - tol;
        if (at_lo && at_hi) continue;
        if (at_lo ? w(k) > tol : at_hi ? w(k) < -tol : std::abs(w(k)) > tol) return false;
      }
      return true;
    }
    Vector normal;
    bool boundary = false;
    if (const auto* s = std::get_if<Halfspace>(&set)) {
      boundary = s->a.dot(x) >= s->b - tol;
      normal = s->a;
    } else {
      const auto& ball = std::get<Ball>(set);
      boundary = (x - ball.c).norm() >= ball.r - tol;
      normal = x - ball.c;
    }
    if (!boundary) return w.norm() <= tol;
    const double t = std::max(0.0, w.dot(normal) / normal.squaredNorm());
    return (w - t * normal).norm() <= tol;
  };
  return a;
}

/// A x = K x for a monotone matrix K (K + K^T positive semidefinite). The
/// resolvent solves (Id + gamma U K) p = x and accepts any metric.
inline MonotoneOp make_linear_monotone(Matrix k) {
  if (k.rows() != k.cols()) throw DimensionError("linear monotone operator: K must be square");
  const Matrix sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, k.norm())) {
    throw Error("linear monotone operator: K + K^T is not positive semidefinite");
  }
  MonotoneOp a;
  a.dim = k.rows();
  a.name = "linear";
  a.resolvent = [k](double gamma, const Metric& u, const Vector& x) {
    const Matrix sys = Matrix::Identity(k.rows(), k.cols()) + gamma * u.to_dense() * k;
    return Vector(sys.partialPivLu().solve(x));
  };
  a.membership = [k](const Vector& x, const Vector& w, double tol) { return (w - k * x).norm() <= tol; };
  return a;
}

/// B x = M^T (M x - b), beta = 1 / lambda_max(M^T M).
inline CocoerciveOp make_quadratic_gradient(Matrix m, Vector b) {
  require_dim(m.rows(), b.size(), "quadratic gradient b");
  const Matrix g = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmax > 0.0)) throw Error("quadratic gradient: M must be nonzero");
  CocoerciveOp op;
  op.dim = m.cols();
  op.beta = 1.0 / lmax;
  op.name = "quadratic";
  op.apply = [m = std::move(m), b = std::move(b)](const Vector& x) { return Vector(m.transpose() * (m * x - b)); };
  return op;
}

/// (L x)_k = x_{k+1} - x_k, R^n -> R^{n-1}, with its adjoint written out.
inline LinearMap first_difference(Index n) {
  if (n < 2) throw DimensionError("first difference needs n >= 2");
  LinearMap l;
  l.in_dim = n;
  l.out_dim = n - 1;
  l.name = "diff";
  l.apply = [](const Vector& x) { return Vector(x.tail(x.size() - 1) - x.head(x.size() - 1)); };
  l.adjoint = [n](const Vector& v) {
    Vector out = Vector::Zero(n);
    out.head(n - 1) -= v;
    out.tail(n - 1) += v;
    return out;
  };
  return l;
}

inline StronglyMonotoneOp make_scaled_identity_strong(Index dim, double nu) {
  if (!(nu > 0.0)) throw Error("strongly monotone operator: nu must be positive");
  return {dim, [nu](const Vector& v) { return Vector(v / nu); }, nu, "nu*Id"};
}

class UnknownProblem : public Error {
 public:
  explicit UnknownProblem(const std::string& name) : Error("unknown problem '" + name + "'") {}
};

class OracleFailure : public Error {
 public:
  using Error::Error;
};

/// A seeded instance together with its certified reference solution.
struct ProblemInstance {
  std::string name;
  std::string kind;  // "fb", "pd" or "driver"
  nlohmann::json config;
  std::optional<FBProblem> fb;
  std::optional<CompositeProblem> pd;
  std::vector<MonotoneOp> sets;  // driver: T_i = J_{A_i}
  Vector x0;
  std::vector<Vector> v0;
  Vector solution;
  std::vector<Vector> dual_solution;
  double certificate = 0.0;
  std::optional<Matrix> gram;  // M^T M where a smooth quadratic part exists
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = g(rng);
  }
  return m;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (Index k = 0; k < n; ++k) v(k) = g(rng);
  return v;
}

}  // namespace detail

struct LassoData {
  Matrix m;
  Vector b;
};

inline LassoData lasso_data(std::uint64_t seed, Index rows, Index cols) {
  std::mt19937_64 rng(seed);
  LassoData d;
  d.m = detail::gaussian_matrix(rng, rows, cols);
  d.b = detail::gaussian_vector(rng, rows);
  return d;
}

/// max_j of the violation of 0 in (M^T(Mx - b))_j + tau d|x_j|.
inline double lasso_certificate(const Matrix& m, const Vector& b, double tau, const Vector& x) {
  const Vector g = m.transpose() * (m * x - b);
  double worst = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double v = x(j) != 0.0 ? std::abs(g(j) + (x(j) > 0.0 ? tau : -tau)) : std::max(0.0, std::abs(g(j)) - tau);
    worst = std::max(worst, v);
  }
  return worst;
}

/// Cyclic coordinate descent for min 1/2 ||Mx - b||^2 + tau ||x||_1.
inline Vector lasso_coordinate_descent(const Matrix& m, const Vector& b, double tau, double tol = 1e-12,
                                       std::size_t max_sweeps = 1000000) {
  const Index n = m.cols();
  Vector x = Vector::Zero(n);
  Vector res = -b;  // M x - b
  const Vector colsq = m.colwise().squaredNorm().transpose();
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Index j = 0; j < n; ++j) {
      if (colsq(j) == 0.0) continue;
      const double old = x(j);
      const double target = old - m.col(j).dot(res) / colsq(j);
      x(j) = detail::soft(target, tau / colsq(j));
      if (x(j) != old) res += (x(j) - old) * m.col(j);
    }
    if (sweep % 16 == 15) {
      res = m * x - b;  // limit drift in the running residual
      if (lasso_certificate(m, b, tau, x) <= tol) break;
    }
  }
  return x;
}

inline ProblemInstance make_lasso(std::uint64_t seed, Index rows, Index cols, double tau) {
  if (!(tau > 0.0)) throw Error("lasso: tau must be positive");
  if (rows < 1 || cols < 1 || cols > 50) throw DimensionError("lasso: need 1 <= cols <= 50 and rows >= 1");
  LassoData d = lasso_data(seed, rows, cols);
  ProblemInstance inst;
  inst.name = "lasso";
  inst.kind = "fb";
  inst.config = {{"seed", seed}, {"rows", rows}, {"cols", cols}, {"tau", tau}};
  inst.solution = lasso_coordinate_descent(d.m, d.b, tau);
  inst.certificate = lasso_certificate(d.m, d.b, tau, inst.solution);
  if (!(inst.certificate <= 1e-10)) {
    throw OracleFailure("lasso oracle not certified: violation " + format_double(inst.certificate));
  }
  inst.gram = d.m.transpose() * d.m;
  FBProblem p{make_prox_l1(cols, tau), make_quadratic_gradient(d.m, d.b), inst.solution};
  inst.fb = std::move(p);
  inst.x0 = Vector::Zero(cols);
  return inst;
}

/// tau = ratio * ||M^T b||_inf
inline double lasso_tau_from_ratio(std::uint64_t seed, Index rows, Index cols, double ratio) {
  const LassoData d = lasso_data(seed, rows, cols);
  return ratio * (d.m.transpose() * d.b).cwiseAbs().maxCoeff();
}

/// Projected-gradient residual ||P_box(x - grad) - x||.
inline double box_pg_residual(const Vector& x, const Vector& grad, const Vector& lo, const Vector& hi) {
  return ((x - grad).cwiseMax(lo).cwiseMin(hi) - x).norm();
}

/// min 1/2 ||M x - b||^2 over [0,1]^n, by projected gradient at step 1/||M^T M||.
inline ProblemInstance make_box_quadratic(std::uint64_t seed, Index rows, Index cols) {
  if (rows < cols) throw DimensionError("box_quadratic: needs rows >= cols for a unique solution");
  std::mt19937_64 rng(seed);
  const Matrix m = detail::gaussian_matrix(rng, rows, cols);
  const Vector b = 2.0 * detail::gaussian_vector(rng, rows);
  const Vector lo = Vector::Zero(cols), hi = Vector::Ones(cols);
  const Matrix g = m.transpose() * m;
  const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Matrix>(g, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  Vector x = Vector::Constant(cols, 0.5);
  for (std::size_t k = 0; k < 2000000; ++k) {
    const Vector nx = (x - step * (g * x - m.transpose() * b)).cwiseMax(lo).cwiseMin(hi);
    const double move = (nx - x).norm();
    x = nx;
    if (move <= 1e-15) break;
  }
  ProblemInstance inst;
  inst.name = "box_quadratic";
  inst.kind = "fb";
  inst.config = {{"seed", seed}, {"rows", rows}, {"cols", cols}};
  inst.solution = x;
  inst.certificate = box_pg_residual(x, m.transpose() * (m * x - b), lo, hi);
  if (!(inst.certificate <= 1e-10)) {
    throw OracleFailure("box_quadratic oracle not certified: residual " + format_double(inst.certificate));
  }
  inst.gram = g;
  inst.fb = FBProblem{make_projection(Box{lo, hi}), make_quadratic_gradient(m, b), x};
  inst.x0 = Vector::Zero(cols);
  return inst;
}

/// Observation for the fused toy: a two-level step signal plus noise, which
/// pushes some samples outside [0,1].
inline Vector fused_observation(std::uint64_t seed, Index n) {
  std::mt19937_64 rng(seed);
  Vector obs(n);
  for (Index k = 0; k < n; ++k) obs(k) = k < n / 2 ? 0.2 : 0.8;
  return obs + 0.3 * detail::gaussian_vector(rng, n);
}

/// Smoothed solution of min 1/2||x - obs||^2 + h(L x) over [0,1]^n, where h is
/// the Moreau envelope of tau|.| with parameter 1/nu (h'(s) = clamp(nu s, -tau, tau)).
/// Projected gradient at step 1/(1 + 4 nu) until the step stalls.
inline Vector fused_oracle(const Vector& obs, double tau, double nu, const Vector& start) {
  const Index n = obs.size();
  const LinearMap l = first_difference(n);
  const double step = 1.0 / (1.0 + 4.0 * nu);
  Vector x = start;
  for (std::size_t k = 0; k < 5000000; ++k) {
    const Vector dual = (nu * l.apply(x)).cwiseMax(-tau).cwiseMin(tau);
    const Vector grad = x - obs + l.adjoint(dual);
    const Vector nx = (x - step * grad).cwiseMax(0.0).cwiseMin(1.0);
    const double move = (nx - x).norm();
    x = nx;
    if (move <= 1e-16) break;
  }
  return x;
}

inline double fused_certificate(const Vector& obs, double tau, double nu, const Vector& x) {
  const LinearMap l = first_difference(obs.size());
  const Vector dual = (nu * l.apply(x)).cwiseMax(-tau).cwiseMin(tau);
  const Vector grad = x - obs + l.adjoint(dual);
  return box_pg_residual(x, grad, Vector::Zero(obs.size()), Vector::Ones(obs.size()));
}

/// Primal-dual instance: A = N_[0,1]^n, C = Id - obs, L = first difference,
/// B = d(tau||.||_1), D = nu Id, r = 0, z = 0. Optional `obs` replaces the
/// seeded observation.
inline ProblemInstance make_fused_toy(std::uint64_t seed, Index n, double tau, double nu,
                                      std::optional<Vector> obs_override = std::nullopt) {
  if (n < 2 || n > 30) throw DimensionError("fused_toy: needs 2 <= n <= 30");
  if (!(tau > 0.0)) throw Error("fused_toy: tau must be positive");
  if (!(nu > 0.0)) throw Error("fused_toy: smoothing nu must be positive");
  const Vector obs = obs_override ? *obs_override : fused_observation(seed, n);
  require_dim(n, obs.size(), "fused_toy observation");

  CompositeProblem p;
  p.z = Vector::Zero(n);
  p.a = make_projection(Box{Vector::Zero(n), Vector::Ones(n)});
  p.c = CocoerciveOp{n, [obs](const Vector& x) { return Vector(x - obs); }, 1.0, "x - obs"};
  DualBlock blk;
  blk.r = Vector::Zero(n - 1);
  blk.b = make_prox_l1(n - 1, tau);
  blk.d = make_scaled_identity_strong(n - 1, nu);
  blk.l = first_difference(n);
  p.blocks.push_back(std::move(blk));

  ProblemInstance inst;
  inst.name = "fused_toy";
  inst.kind = "pd";
  inst.config = {{"seed", seed}, {"n", n}, {"tau", tau}, {"nu", nu}};
  if (obs_override) inst.config["obs"] = std::vector<double>(obs.data(), obs.data() + obs.size());
  inst.solution = fused_oracle(obs, tau, nu, obs.cwiseMax(0.0).cwiseMin(1.0));
  inst.certificate = fused_certificate(obs, tau, nu, inst.solution);
  if (!(inst.certificate <= 1e-10)) {
    throw OracleFailure("fused_toy oracle not certified: residual " + format_double(inst.certificate));
  }
  inst.dual_solution = {
      Vector((nu * p.blocks[0].l.apply(inst.solution)).cwiseMax(-tau).cwiseMin(tau))};
  p.known_primal = inst.solution;
  p.known_dual = inst.dual_solution;
  inst.pd = std::move(p);
  inst.x0 = Vector::Zero(n);
  inst.v0 = {Vector::Zero(n - 1)};
  return inst;
}

/// Driver instance: T_1 = P{x_1 <= 0}, T_2 = P{x_2 <= 0} in R^2 from (1, 1).
inline ProblemInstance make_two_halfspaces() {
  ProblemInstance inst;
  inst.name = "two_halfspaces";
  inst.kind = "driver";
  inst.config = nlohmann::json::object();
  inst.sets.push_back(make_projection(Halfspace{Vector::Unit(2, 0), 0.0}));
  inst.sets.push_back(make_projection(Halfspace{Vector::Unit(2, 1), 0.0}));
  inst.x0 = Vector::Ones(2);
  inst.solution = Vector::Zero(2);  // a point of the intersection, used for Fejer monitoring
  return inst;
}

/// Primal-dual instance on R with L = Id, A = 0, C = Id, B = 0, D = Id; the
/// origin is the saddle point.
inline ProblemInstance make_trivial_pd() {
  CompositeProblem p;
  p.z = Vector::Zero(1);
  p.a = make_zero_operator(1);
  p.c = make_scaled_identity_cocoercive(1, 1.0);
  p.blocks.push_back({Vector::Zero(1), make_zero_operator(1), make_scaled_identity_strong(1, 1.0),
                      LinearMap::identity(1)});
  ProblemInstance inst;
  inst.name = "trivial_pd";
  inst.kind = "pd";
  inst.config = nlohmann::json::object();
  inst.solution = Vector::Zero(1);
  inst.dual_solution = {Vector::Zero(1)};
  p.known_primal = inst.solution;
  p.known_dual = inst.dual_solution;
  inst.pd = std::move(p);
  inst.x0 = Vector::Zero(1);
  inst.v0 = {Vector::Zero(1)};
  return inst;
}

struct RegistryEntry {
  std::string name;
  std::string kind;
  std::string description;
  std::function<ProblemInstance(const nlohmann::json&)> build;
};

inline const std::vector<RegistryEntry>& problem_registry() {
  static const std::vector<RegistryEntry> entries = {
      {"lasso", "fb", "1/2||Mx-b||^2 + tau||x||_1, seeded Gaussian M; keys seed, rows, cols, tau | tau_ratio",
       [](const nlohmann::json& c) {
         const auto seed = c.value("seed", std::uint64_t{42});
         const auto rows = c.value("rows", Index{5});
         const auto cols = c.value("cols", Index{20});
         const double tau =
             c.contains("tau") ? c.at("tau").get<double>()
                               : lasso_tau_from_ratio(seed, rows, cols, c.value("tau_ratio", 0.1));
         return make_lasso(seed, rows, cols, tau);
       }},
      {"box_quadratic", "fb", "1/2||Mx-b||^2 over [0,1]^n, seeded tall M; keys seed, rows, cols",
       [](const nlohmann::json& c) {
         return make_box_quadratic(c.value("seed", std::uint64_t{3}), c.value("rows", Index{8}),
                                   c.value("cols", Index{5}));
       }},
      {"fused_toy", "pd", "box-constrained smoothed fused signal; keys seed, n, tau, nu",
       [](const nlohmann::json& c) {
         std::optional<Vector> obs;
         if (c.contains("obs")) {
           const auto raw = c.at("obs").get<std::vector<double>>();
           obs = Eigen::Map<const Vector>(raw.data(), static_cast<Index>(raw.size()));
         }
         return make_fused_toy(c.value("seed", std::uint64_t{7}), c.value("n", Index{12}), c.value("tau", 0.5),
                               c.value("nu", 10.0), obs);
       }},
      {"trivial_pd", "pd", "one-dimensional primal-dual instance with solution (0, 0)",
       [](const nlohmann::json&) { return make_trivial_pd(); }},
      {"two_halfspaces", "driver", "projections onto {x1 <= 0} and {x2 <= 0} in R^2 from (1, 1)",
       [](const nlohmann::json&) { return make_two_halfspaces(); }},
  };
  return entries;
}

inline ProblemInstance make_instance(const std::string& name, const nlohmann::json& config = nlohmann::json::object()) {
  for (const auto& e : problem_registry()) {
    if (e.name == name) return e.build(config);
  }
  throw UnknownProblem(name);
}

}  // namespace msplit

#endif  // MSPLIT_PROBLEMS_HPP
