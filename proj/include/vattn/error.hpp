#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vattn {

/// Precondition or invariant violation on caller-supplied data.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced mid-computation, or an iteration that cannot terminate.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative row solve inside a batched problem did not converge.
class ConvergenceFailure : public NumericalFailure {
 public:
  ConvergenceFailure(std::size_t row, const std::string& what)
      : NumericalFailure(what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace vattn
