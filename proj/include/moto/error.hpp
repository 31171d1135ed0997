#pragma once

#include <stdexcept>
#include <string>

namespace moto {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed by an operation, or a diverging loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input files, bad arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A malformed line in a TSV-style input file.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Checkpoint, vocabulary or label inventory that do not belong together.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace moto
