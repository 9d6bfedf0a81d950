#ifndef MSPLIT_ERROR_HPP
#define MSPLIT_ERROR_HPP

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace msplit {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that was required to be symmetric positive definite is not.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// An operator was asked for a closed form it does not have (e.g. an l1
/// resolvent under a dense metric).
class UnsupportedMetric : public Error {
 public:
  using Error::Error;
};

/// A step size, relaxation or averagedness parameter lies outside the window
/// required for convergence. `window()` names the violated window and
/// `iteration()` the first offending index, when there is one.
class ParameterWindowError : public Error {
 public:
  ParameterWindowError(std::string window, std::optional<std::size_t> n,
                       const std::string& detail)
      : Error(window + (n ? " violated at n=" + std::to_string(*n) : std::string(" violated")) +
              ": " + detail),
        window_(std::move(window)),
        n_(n) {}

  const std::string& window() const noexcept { return window_; }
  std::optional<std::size_t> iteration() const noexcept { return n_; }

 private:
  std::string window_;
  std::optional<std::size_t> n_;
};

/// NaN or infinity showed up inside an iteration.
class NumericalError : public Error {
 public:
  NumericalError(std::size_t n, const std::string& what)
      : Error("non-finite value at iteration " + std::to_string(n) + ": " + what), n_(n) {}
  std::size_t iteration() const noexcept { return n_; }

 private:
  std::size_t n_;
};

inline void require_dim(long expected, long got, const char* what) {
  if (expected != got) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace msplit

#endif  // MSPLIT_ERROR_HPP
