#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nntrace {

/// Root of every exception thrown by the library. `code()` is the stable
/// machine-readable category used by the HTTP API and the CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Invalid network configuration or config/dataset mismatch.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error("CONFIG_INVALID", message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Vector or matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("SHAPE_MISMATCH", message) {}
};

/// Non-finite or otherwise unusable numeric input.
class InputError : public Error {
 public:
  explicit InputError(const std::string& message) : Error("INPUT_INVALID", message) {}
};

/// Dataset problems: CSV ingestion, schema inference, empty splits.
/// `row` is 1-based counting the header line as row 1; 0 means "no row".
class DataError : public Error {
 public:
  explicit DataError(const std::string& message, std::size_t row = 0, std::string column = {})
      : Error("DATASET_MALFORMED", message), row_(row), column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Illegal session state transition or driver call.
class StateError : public Error {
 public:
  explicit StateError(const std::string& message) : Error("ILLEGAL_TRANSITION", message) {}
};

/// Metric requested for a task it is not defined on (accuracy on regression).
class UnsupportedMetricError : public Error {
 public:
  explicit UnsupportedMetricError(const std::string& message)
      : Error("UNSUPPORTED_METRIC", message) {}
};

/// Malformed serialized trace line. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message, std::size_t line = 0)
      : Error("TRACE_MALFORMED", line ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace nntrace
