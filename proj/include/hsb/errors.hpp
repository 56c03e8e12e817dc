#pragma once

#include <stdexcept>
#include <string>

namespace hsb {

/// Bad input: a precondition or a configuration value was violated.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A computation ran but could not deliver a trustworthy result.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace hsb
