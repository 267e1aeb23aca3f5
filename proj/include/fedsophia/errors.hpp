#pragma once

#include <stdexcept>
#include <string>

namespace fedsophia {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain of an operation (non-finite values, division by zero).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must agree (e.g. image and label counts) do not.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Not enough items to satisfy a request (too few samples, empty model list).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An iterative method blew up.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. Carries the offending line when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace fedsophia
