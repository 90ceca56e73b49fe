#pragma once

#include <stdexcept>
#include <string>

namespace micromix {

// Invalid argument or out-of-range value supplied by the caller.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Channel construction that cannot be realized (e.g. baffle past the outlet).
class GeometryError : public DomainError {
 public:
  using DomainError::DomainError;
};

// NaN/Inf encountered where finite numbers are required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, truncated or version-mismatched file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejection sampling failed to place points in the fluid domain.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown key, wrong type or unsupported schema version in a run config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace micromix
