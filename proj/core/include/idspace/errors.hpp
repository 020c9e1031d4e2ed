#pragma once

#include <stdexcept>
#include <string>

namespace idspace {

/// Invalid shapes, dimensions or hyperparameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API was called in the wrong order (e.g. backward without a forward record).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN / Inf encountered in a loss, gradient or parameter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a metric (e.g. diameter of an empty set).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Synthetic data generation could not satisfy its constraints.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace idspace
