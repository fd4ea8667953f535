#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqgan {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data that parses but violates a domain invariant (alphabet, length, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad options: unknown column, infeasible hyperparameter, missing model.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape or dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Overflow or NaN produced during numeric work.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Failure reading or writing files and containers.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqgan
