#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace firemae {

/// Raised when tensor extents violate an operator contract. Carries the
/// operator and the offending dimension so callers can report it verbatim.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, std::string dimension, std::size_t got, std::size_t expected)
      : std::invalid_argument(op + ": dimension '" + dimension + "' is " + std::to_string(got) +
                              ", expected " + std::to_string(expected)),
        op_(std::move(op)),
        dimension_(std::move(dimension)),
        got_(got),
        expected_(expected) {}

  ShapeError(std::string op, std::string message)
      : std::invalid_argument(op + ": " + message), op_(std::move(op)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& dimension() const noexcept { return dimension_; }
  std::size_t got() const noexcept { return got_; }
  std::size_t expected() const noexcept { return expected_; }

 private:
  std::string op_;
  std::string dimension_;
  std::size_t got_ = 0;
  std::size_t expected_ = 0;
};

/// Invalid configuration value or violated precondition.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Runtime state errors (uninitialized statistics, missing gradients, ...).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint / scene container / report I/O failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or value during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace firemae
