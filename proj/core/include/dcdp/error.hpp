#pragma once

#include <stdexcept>
#include <string>

namespace dcdp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes are incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A class label lies outside [0, C).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (empty input, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Batch statistics cannot be formed (train-mode batch norm with fewer than two values).
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input is well-formed but does not match the declared schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A loss or statistic became NaN/Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcdp
