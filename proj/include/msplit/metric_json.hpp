#ifndef MSPLIT_METRIC_JSON_HPP
#define MSPLIT_METRIC_JSON_HPP

// JSON form of metric sequences:
//
//   {"kind": "diagonal" | "dense",
//    "metrics": [ ... ],          // diagonal: entry vectors; dense: row-major
//    "eta": [ ... ],              // optional, defaults to zeros
//    "eta_sum": 0.0}              // optional declared sum
//
// Dense metrics may be given flat (d*d numbers, row-major) or as nested rows.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "msplit/metric.hpp"

namespace msplit {

inline Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("expected a JSON array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

inline Matrix dense_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw Error("dense metric: expected a nonempty array");
  if (j.front().is_array()) {
    const auto rows = static_cast<Index>(j.size());
    Matrix m(rows, rows);
    for (Index r = 0; r < rows; ++r) {
      const auto& row = j[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Index>(row.size()) != rows) {
        throw DimensionError("dense metric: ragged or non-square rows");
      }
      for (Index c = 0; c < rows; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
  }
  const auto n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(j.size()))));
  if (n * n != static_cast<Index>(j.size())) throw DimensionError("dense metric: flat array length is not a square");
  Matrix m(n, n);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) m(r, c) = j[static_cast<std::size_t>(r * n + c)].get<double>();
  }
  return m;
}

inline Metric metric_from_json(const std::string& kind, const nlohmann::json& j) {
  if (kind == "diagonal") return Metric::diagonal(vector_from_json(j));
  if (kind == "dense") return Metric::dense(dense_from_json(j));
  throw Error("unknown metric kind '" + kind + "'");
}

inline MetricSequence load_metric_sequence(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto& ms = j.at("metrics");
  if (!ms.is_array() || ms.empty()) throw Error("metric sequence: 'metrics' must be a nonempty array");
  std::vector<Metric> metrics;
  for (const auto& m : ms) metrics.push_back(metric_from_json(kind, m));
  std::vector<double> eta;
  if (j.contains("eta")) eta = j.at("eta").get<std::vector<double>>();
  std::optional<double> declared;
  if (j.contains("eta_sum")) declared = j.at("eta_sum").get<double>();
  return MetricSequence(std::move(metrics), std::move(eta), declared);
}

inline nlohmann::json metric_sequence_to_json(const MetricSequence& seq) {
  if (seq.is_generated()) throw Error("metric sequence: generator rules are not serializable");
  const auto& ms = seq.explicit_metrics();
  const bool diag = std::all_of(ms.begin(), ms.end(), [](const Metric& m) { return m.is_diagonal(); });
  nlohmann::json j;
  j["kind"] = diag ? "diagonal" : "dense";
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : ms) {
    if (diag) {
      j["metrics"].push_back(vector_to_json(m.diagonal_entries()));
    } else {
      const Matrix d = m.to_dense();
      nlohmann::json flat = nlohmann::json::array();
      for (Index r = 0; r < d.rows(); ++r) {
        for (Index c = 0; c < d.cols(); ++c) flat.push_back(d(r, c));
      }
      j["metrics"].push_back(flat);
    }
  }
  j["eta"] = seq.explicit_eta();
  j["eta_sum"] = seq.declared_eta_sum();
  return j;
}

}  // namespace msplit

#endif  // MSPLIT_METRIC_JSON_HPP
