#ifndef MSPLIT_METRIC_HPP
#define MSPLIT_METRIC_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "msplit/error.hpp"
#include "msplit/report.hpp"

namespace msplit {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric positive definite map U on R^d, stored either as its diagonal or
/// as a dense symmetric matrix, together with certified spectral bounds
///
///     alpha_lb * Id <= U <= norm_ub * Id.
///
/// The bounds are checked once at construction and then trusted by every
/// algorithm that needs ||U|| or lambda_min(U). Copies share storage.
class Metric {
 public:
  static Metric identity(Index dim) { return diagonal(Vector::Ones(dim)); }

  static Metric scaled_identity(Index dim, double scale) {
    return diagonal(Vector::Constant(dim, scale));
  }

  static Metric diagonal(Vector entries) {
    if (entries.size() == 0) throw DimensionError("metric: empty diagonal");
    if (!entries.allFinite()) throw NotPositiveDefinite("metric: non-finite diagonal entry");
    const double lo = entries.minCoeff();
    const double hi = entries.maxCoeff();
    if (!(lo > 0.0)) {
      throw NotPositiveDefinite("metric: diagonal entry " + std::to_string(lo) + " is not positive");
    }
    auto d = std::make_shared<Data>();
    d->dim = entries.size();
    d->is_diagonal = true;
    d->diag = std::move(entries);
    d->alpha_lb = lo;
    d->norm_ub = hi;
    return Metric(std::move(d));
  }

  /// Dense SPD metric. The matrix must equal its transpose exactly.
  static Metric dense(Matrix m) { return dense_impl(std::move(m), std::nullopt, std::nullopt); }

  /// Dense SPD metric with caller-certified bounds; the bounds are verified
  /// against a symmetric eigensolve (relative slack 1e-9).
  static Metric dense(Matrix m, double alpha_lb, double norm_ub) {
    return dense_impl(std::move(m), alpha_lb, norm_ub);
  }

  Index dim() const noexcept { return d_->dim; }
  bool is_diagonal() const noexcept { return d_->is_diagonal; }
  double alpha_lb() const noexcept { return d_->alpha_lb; }
  double norm_ub() const noexcept { return d_->norm_ub; }

  const Vector& diagonal_entries() const {
    if (!d_->is_diagonal) throw UnsupportedMetric("metric: dense metric has no diagonal representation");
    return d_->diag;
  }

  Matrix to_dense() const {
    if (d_->is_diagonal) return d_->diag.asDiagonal();
    return d_->dense;
  }

  /// Returns s > 0 if U = s * Id exactly, otherwise nullopt.
  std::optional<double> isotropic_scale() const {
    if (d_->is_diagonal) {
      const double s = d_->diag(0);
      if ((d_->diag.array() == s).all()) return s;
      return std::nullopt;
    }
    const double s = d_->dense(0, 0);
    if ((d_->dense - Matrix::Identity(dim(), dim()) * s).cwiseAbs().maxCoeff() == 0.0) return s;
    return std::nullopt;
  }

  /// U x
  Vector apply(const Vector& x) const {
    require_dim(dim(), x.size(), "metric apply");
    if (d_->is_diagonal) return d_->diag.cwiseProduct(x);
    return d_->dense * x;
  }

  /// U^{-1} x
  Vector apply_inverse(const Vector& x) const {
    require_dim(dim(), x.size(), "metric apply_inverse");
    if (d_->is_diagonal) return x.cwiseQuotient(d_->diag);
    return d_->llt.solve(x);
  }

  /// <Ux, y>
  double inner(const Vector& x, const Vector& y) const {
    require_dim(dim(), x.size(), "inner_u");
    require_dim(dim(), y.size(), "inner_u");
    if (d_->is_diagonal) return (d_->diag.array() * x.array() * y.array()).sum();
    return (d_->dense * x).dot(y);
  }

  double norm(const Vector& x) const { return std::sqrt(std::max(0.0, inner(x, x))); }

  /// ||x||_{U^{-1}}^2 = <U^{-1}x, x>; the geometry in which the splitting
  /// operators are averaged.
  double inverse_norm_sq(const Vector& x) const { return std::max(0.0, apply_inverse(x).dot(x)); }
  double inverse_norm(const Vector& x) const { return std::sqrt(inverse_norm_sq(x)); }

  Metric scaled(double s) const {
    if (!(s > 0.0)) throw NotPositiveDefinite("metric: non-positive scale");
    if (d_->is_diagonal) return diagonal(d_->diag * s);
    return dense(d_->dense * s, d_->alpha_lb * s, d_->norm_ub * s);
  }

  /// Eigenvalues (ascending) and orthonormal eigenvectors; dense only.
  const Vector& eigenvalues() const { return d_->evals; }
  const Matrix& eigenvectors() const { return d_->evecs; }

 private:
  struct Data {
    Index dim = 0;
    bool is_diagonal = true;
    Vector diag;
    Matrix dense;
    Eigen::LLT<Matrix> llt;
    Vector evals;
    Matrix evecs;
    double alpha_lb = 0.0;
    double norm_ub = 0.0;
  };

  explicit Metric(std::shared_ptr<const Data> d) : d_(std::move(d)) {}

  static Metric dense_impl(Matrix m, std::optional<double> alpha_lb, std::optional<double> norm_ub) {
    if (m.rows() == 0 || m.rows() != m.cols()) throw DimensionError("metric: dense matrix must be square and nonempty");
    if (!m.allFinite()) throw NotPositiveDefinite("metric: non-finite entry");
    if (m != m.transpose()) throw NotPositiveDefinite("metric: dense matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw NotPositiveDefinite("metric: eigensolve failed");
    const double lmin = es.eigenvalues()(0);
    const double lmax = es.eigenvalues()(m.rows() - 1);
    if (!(lmin > 0.0)) {
      throw NotPositiveDefinite("metric: smallest eigenvalue " + std::to_string(lmin) + " is not positive");
    }
    auto d = std::make_shared<Data>();
    d->dim = m.rows();
    d->is_diagonal = false;
    d->llt.compute(m);
    if (d->llt.info() != Eigen::Success) throw NotPositiveDefinite("metric: Cholesky factorization failed");
    d->dense = std::move(m);
    d->evals = es.eigenvalues();
    d->evecs = es.eigenvectors();
    constexpr double slack = 1e-9;
    if (alpha_lb) {
      if (!(*alpha_lb > 0.0) || *alpha_lb > lmin * (1.0 + slack)) {
        throw NotPositiveDefinite("metric: certified lower bound exceeds smallest eigenvalue");
      }
      d->alpha_lb = *alpha_lb;
    } else {
      d->alpha_lb = lmin;
    }
    if (norm_ub) {
      if (*norm_ub < lmax * (1.0 - slack)) {
        throw NotPositiveDefinite("metric: certified norm bound is below the spectral norm");
      }
      d->norm_ub = *norm_ub;
    } else {
      d->norm_ub = lmax;
    }
    return Metric(std::move(d));
  }

  std::shared_ptr<const Data> d_;
};

inline double inner_u(const Metric& u, const Vector& x, const Vector& y) { return u.inner(x, y); }

inline double norm_u(const Metric& u, const Vector& x) { return u.norm(x); }

/// lambda_min(lhs - rhs) >= -tol. Exact for diagonal pairs, symmetric
/// eigensolve of the difference otherwise.
inline bool loewner_geq(const Metric& lhs, const Metric& rhs, double tol) {
  require_dim(lhs.dim(), rhs.dim(), "loewner_geq");
  if (lhs.is_diagonal() && rhs.is_diagonal()) {
    return (lhs.diagonal_entries() - rhs.diagonal_entries()).minCoeff() >= -tol;
  }
  const Matrix diff = lhs.to_dense() - rhs.to_dense();
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) >= -tol;
}

/// Default tolerance 1e-10 * max(||lhs||, ||rhs||).
inline bool loewner_geq(const Metric& lhs, const Metric& rhs) {
  return loewner_geq(lhs, rhs, 1e-10 * std::max(lhs.norm_ub(), rhs.norm_ub()));
}

/// U^{-1}, with bounds alpha_lb' = 1/norm_ub and norm_ub' = 1/alpha_lb.
inline Metric inverse(const Metric& u) {
  constexpr double singular_ratio = 1e-14;
  if (u.alpha_lb() < singular_ratio * u.norm_ub()) {
    throw NotPositiveDefinite("inverse: metric is singular to tolerance");
  }
  if (u.is_diagonal()) return Metric::diagonal(u.diagonal_entries().cwiseInverse());
  const Matrix& v = u.eigenvectors();
  Matrix inv = v * u.eigenvalues().cwiseInverse().asDiagonal() * v.transpose();
  inv = 0.5 * (inv + inv.transpose()).eval();
  return Metric::dense(std::move(inv), 1.0 / u.norm_ub(), 1.0 / u.alpha_lb());
}

/// Symmetric square root. Dense case clamps eigenvalues at alpha_lb before
/// taking roots.
inline Metric sqrt(const Metric& u) {
  if (u.is_diagonal()) return Metric::diagonal(u.diagonal_entries().cwiseSqrt());
  const Matrix& v = u.eigenvectors();
  const Vector roots = u.eigenvalues().cwiseMax(u.alpha_lb()).cwiseSqrt();
  Matrix r = v * roots.asDiagonal() * v.transpose();
  r = 0.5 * (r + r.transpose()).eval();
  return Metric::dense(std::move(r), std::sqrt(u.alpha_lb()), std::sqrt(u.norm_ub()));
}

/// A finite list of metrics (the last one is held constant beyond the list)
/// or a generator rule evaluated over a declared horizon, together with the
/// slack sequence eta_n of the ordering condition (1 + eta_n) U_{n+1} >= U_n.
class MetricSequence {
 public:
  MetricSequence() = default;

  explicit MetricSequence(std::vector<Metric> metrics, std::vector<double> eta = {},
                          std::optional<double> declared_eta_sum = std::nullopt)
      : metrics_(std::move(metrics)), eta_(std::move(eta)) {
    if (metrics_.empty()) throw DimensionError("metric sequence: empty");
    for (const auto& m : metrics_) require_dim(metrics_.front().dim(), m.dim(), "metric sequence");
    for (double e : eta_) {
      if (!(e >= 0.0)) throw Error("metric sequence: eta entries must be nonnegative");
    }
    horizon_ = metrics_.size();
    double lo = metrics_.front().alpha_lb();
    double hi = metrics_.front().norm_ub();
    for (const auto& m : metrics_) {
      lo = std::min(lo, m.alpha_lb());
      hi = std::max(hi, m.norm_ub());
    }
    alpha_ = lo;
    mu_ = hi;
    double s = 0.0;
    for (double e : eta_) s += e;
    declared_eta_sum_ = declared_eta_sum.value_or(s);
  }

  static MetricSequence constant(Metric u) { return MetricSequence({std::move(u)}); }

  /// Generator form. `alpha` and `mu` are the declared uniform bounds.
  static MetricSequence generated(std::function<Metric(std::size_t)> rule,
                                  std::function<double(std::size_t)> eta, double declared_eta_sum,
                                  double alpha, double mu, std::size_t horizon) {
    MetricSequence s;
    s.rule_ = std::move(rule);
    s.eta_rule_ = std::move(eta);
    s.declared_eta_sum_ = declared_eta_sum;
    s.alpha_ = alpha;
    s.mu_ = mu;
    s.horizon_ = horizon;
    s.dim_ = s.rule_(0).dim();
    return s;
  }

  Metric at(std::size_t n) const {
    if (rule_) return rule_(n);
    return metrics_[std::min(n, metrics_.size() - 1)];
  }

  double eta(std::size_t n) const {
    if (eta_rule_) return eta_rule_(n);
    return n < eta_.size() ? eta_[n] : 0.0;
  }

  Index dim() const { return rule_ ? dim_ : metrics_.front().dim(); }
  std::size_t horizon() const noexcept { return horizon_; }
  double alpha() const noexcept { return alpha_; }
  double mu() const noexcept { return mu_; }
  double declared_eta_sum() const noexcept { return declared_eta_sum_; }
  bool is_generated() const noexcept { return static_cast<bool>(rule_); }
  bool empty() const noexcept { return !rule_ && metrics_.empty(); }
  const std::vector<Metric>& explicit_metrics() const noexcept { return metrics_; }
  const std::vector<double>& explicit_eta() const noexcept { return eta_; }

 private:
  std::vector<Metric> metrics_;
  std::vector<double> eta_;
  std::function<Metric(std::size_t)> rule_;
  std::function<double(std::size_t)> eta_rule_;
  double declared_eta_sum_ = 0.0;
  double alpha_ = 0.0;
  double mu_ = 0.0;
  std::size_t horizon_ = 0;
  Index dim_ = 0;
};

struct MetricSequenceReport {
  ValidationReport report;
  std::vector<bool> ordering_holds;      // entry n: (1 + eta_n) U_{n+1} >= U_n
  std::vector<double> running_max_norm;  // max_{k <= n} ||U_k||
  double eta_partial_sum = 0.0;
  bool eta_sum_matches = true;

  bool passed() const noexcept { return report.passed(); }
};

/// Checks the ordering condition, the uniform bounds alpha/mu and the
/// declared sum of eta over the sequence horizon. Failures go in the report.
inline MetricSequenceReport validate_sequence(const MetricSequence& seq, double tol,
                                              std::optional<std::size_t> horizon = std::nullopt) {
  MetricSequenceReport out;
  if (seq.empty()) {
    out.report.fail("metric sequence", std::nullopt, "empty sequence");
    return out;
  }
  const std::size_t len = std::max<std::size_t>(1, horizon.value_or(seq.horizon()));
  double running = 0.0;
  Metric cur = seq.at(0);
  for (std::size_t n = 0; n < len; ++n) {
    running = std::max(running, cur.norm_ub());
    out.running_max_norm.push_back(running);
    if (cur.alpha_lb() < seq.alpha() - tol) {
      out.report.fail("metric bounds", n, "lambda_min(U_n) below the declared uniform bound alpha");
    }
    if (cur.norm_ub() > seq.mu() + tol) {
      out.report.fail("metric bounds", n, "||U_n|| exceeds the declared uniform bound mu");
    }
    const double eta = seq.eta(n);
    out.eta_partial_sum += eta;
    if (n + 1 < len) {
      Metric next = seq.at(n + 1);
      const bool ok = loewner_geq(next.scaled(1.0 + eta), cur, tol);
      out.ordering_holds.push_back(ok);
      if (!ok) {
        out.report.fail("metric ordering", n, "(1 + eta_n) U_{n+1} >= U_n does not hold");
      }
      cur = std::move(next);
    }
  }
  const double declared = seq.declared_eta_sum();
  const double slack = 1e-12 * std::max(1.0, declared) + tol;
  out.eta_sum_matches = seq.is_generated() ? out.eta_partial_sum <= declared + slack
                                           : std::abs(out.eta_partial_sum - declared) <= slack;
  if (!out.eta_sum_matches) {
    out.report.fail("eta summability", std::nullopt,
                    "partial sum of eta " + std::to_string(out.eta_partial_sum) +
                        " does not match declared sum " + std::to_string(declared));
  }
  return out;
}

}  // namespace msplit

#endif  // MSPLIT_METRIC_HPP
