#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hct {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model, layer or run configuration is internally inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An API was called outside its contract (empty dataset, non-scalar loss, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Carries the 1-based line number and the column name.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ", column " + column + ": " + what),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hct
