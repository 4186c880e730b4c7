#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sfofr {

/// Broad failure class; the CLI maps these onto exit codes 1 and 2.
enum class ErrorCategory { data, numerical };

class Error : public std::exception {
 public:
  Error(ErrorCategory category, std::string message)
      : category_(category), message_(std::move(message)) {}

  const char* what() const noexcept override { return message_.c_str(); }
  ErrorCategory category() const noexcept { return category_; }

  /// Prefix the message with a pipeline stage label, keeping the dynamic type.
  void add_context(std::string_view stage) {
    message_ = std::string(stage) + ": " + message_;
  }

 private:
  ErrorCategory category_;
  std::string message_;
};

/// Invalid sizes, counts, or options.
class ParameterError : public Error {
 public:
  explicit ParameterError(std::string m) : Error(ErrorCategory::data, std::move(m)) {}
};

/// Argument outside the function's domain (e.g. a point outside [0,1]).
class DomainError : public Error {
 public:
  explicit DomainError(std::string m) : Error(ErrorCategory::data, std::move(m)) {}
};

/// Input data violates a structural invariant.
class DataError : public Error {
 public:
  explicit DataError(std::string m) : Error(ErrorCategory::data, std::move(m)) {}
};

/// Malformed input file; message carries the file and line number.
class ParseError : public DataError {
 public:
  explicit ParseError(std::string m) : DataError(std::move(m)) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(std::string m) : Error(ErrorCategory::numerical, std::move(m)) {}
};

class SingularityError : public NumericalError {
 public:
  explicit SingularityError(std::string m) : NumericalError(std::move(m)) {}
};

/// Spectral condition for invertibility of a spatial operator is violated.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(std::string m) : NumericalError(std::move(m)) {}
};

/// No feasible step could be found under the spectral-radius constraint.
class ConstraintError : public NumericalError {
 public:
  explicit ConstraintError(std::string m) : NumericalError(std::move(m)) {}
};

/// A ratio statistic with a vanishing denominator.
class UndefinedStatisticError : public NumericalError {
 public:
  explicit UndefinedStatisticError(std::string m) : NumericalError(std::move(m)) {}
};

class GenerationError : public NumericalError {
 public:
  explicit GenerationError(std::string m) : NumericalError(std::move(m)) {}
};

}  // namespace sfofr
