#ifndef MSPLIT_REPORT_HPP
#define MSPLIT_REPORT_HPP

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace msplit {

struct Issue {
  std::string check;                 // e.g. "lambda window", "metric ordering"
  std::optional<std::size_t> n;      // iteration index, if the check is per-n
  std::string message;
};

/// Outcome of a hypothesis validator. Validators never throw on a failed
/// hypothesis; they record it here.
struct ValidationReport {
  std::vector<Issue> issues;
  std::vector<std::string> notes;

  bool passed() const noexcept { return issues.empty(); }

  void fail(std::string check, std::optional<std::size_t> n, std::string message) {
    issues.push_back({std::move(check), n, std::move(message)});
  }

  void merge(const ValidationReport& other, const std::string& prefix = {}) {
    for (const auto& i : other.issues) {
      issues.push_back({i.check, i.n, prefix.empty() ? i.message : prefix + ": " + i.message});
    }
    notes.insert(notes.end(), other.notes.begin(), other.notes.end());
  }

  const Issue* first_issue() const noexcept { return issues.empty() ? nullptr : &issues.front(); }

  bool has(const std::string& check) const {
    for (const auto& i : issues) {
      if (i.check == check) return true;
    }
    return false;
  }

  std::optional<std::size_t> first_n(const std::string& check) const {
    for (const auto& i : issues) {
      if (i.check == check) return i.n;
    }
    return std::nullopt;
  }
};

inline std::ostream& operator<<(std::ostream& os, const ValidationReport& r) {
  os << (r.passed() ? "PASS" : "FAIL") << '\n';
  for (const auto& i : r.issues) {
    os << "  " << i.check;
    if (i.n) os << " violated at n=" << *i.n;
    os << ": " << i.message << '\n';
  }
  for (const auto& note : r.notes) os << "  note: " << note << '\n';
  return os;
}

}  // namespace msplit

#endif  // MSPLIT_REPORT_HPP
