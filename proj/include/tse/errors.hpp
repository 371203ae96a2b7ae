#pragma once

#include <stdexcept>
#include <string>

namespace tse {

/// Invalid input: shapes, ranges, malformed parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A requested moment does not exist for the given kernel and truncation.
class NonexistenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Numerical breakdown: non-PD matrices, underflow without a fallback,
/// bracketing failures.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Monte Carlo sampler cannot proceed with the requested method.
class InfeasibleSampling : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace tse
