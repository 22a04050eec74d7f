#pragma once

#include <stdexcept>
#include <string>

namespace funcnet {

/// Operand shapes do not agree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared in an operation result.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A task parameter lies outside the stored parameter domain, or a map is degenerate.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Misuse of the gradient tape (non-scalar loss, detached loss, foreign handle).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed configuration or network description.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Image, manifest or checkpoint I/O failure.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training loss ran away from its starting value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace funcnet
