#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsc {

// Parameter outside its valid domain (non-positive sigma, degenerate rotation, ...).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input: shape mismatches, empty batches, wrong vector lengths.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidInterval : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An optimizer produced a non-finite loss or gradient.
class OptimizationFailure : public std::runtime_error {
 public:
  OptimizationFailure(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept {
    return iteration_;
  }

 private:
  std::size_t iteration_;
};

// Scene file does not match the schema. fieldPath() names the offending entry,
// e.g. "body.parameters".
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& fieldPath, const std::string& what)
      : std::runtime_error(fieldPath + ": " + what), fieldPath_(fieldPath) {}

  const std::string& fieldPath() const noexcept {
    return fieldPath_;
  }

 private:
  std::string fieldPath_;
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

} // namespace gsc
