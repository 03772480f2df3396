#pragma once

#include <stdexcept>
#include <string>

namespace scarkit {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  validation,
  capacity,
  convergence,
  integration,
  consistency,
  range,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::integration: return "integration";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::range: return "range";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// CLI exit codes: 0 success, 2 validation, 3 capacity, 4 convergence,
/// 5 integration. Consistency/range problems are caller mistakes and share
/// the validation code; io failures too.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::capacity: return 3;
    case ErrorKind::convergence: return 4;
    case ErrorKind::integration: return 5;
    default: return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind), message_(what) {}
  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the category prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what) : Error(ErrorKind::capacity, what) {}
};

/// Carries the best residual reached before giving up.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(ErrorKind::convergence, what + " (best residual " + std::to_string(best_residual) + ")"),
        best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class IntegrationError : public Error {
 public:
  explicit IntegrationError(const std::string& what) : Error(ErrorKind::integration, what) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what) : Error(ErrorKind::consistency, what) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(ErrorKind::range, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace scarkit
