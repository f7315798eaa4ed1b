#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opinet {

/// Broad failure class; the CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  generic,
  config,    // exit 2
  data,      // exit 3
  numeric,   // exit 4
  resource,  // exit 5
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

/// An argument outside its documented range.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

/// A documented precondition on the input data does not hold.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

/// Explicit time stepping would be unstable (CFL).
class StabilityError : public Error {
 public:
  explicit StabilityError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

/// Iterative solver ran out of iterations.
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& what) : Error(ErrorCategory::resource, what) {}
};

/// Malformed or missing file content.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

int exit_code(ErrorCategory category) noexcept;
std::string_view category_name(ErrorCategory category) noexcept;

}  // namespace opinet
