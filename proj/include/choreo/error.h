#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace choreo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line where the problem was found.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Two operands whose shapes cannot be combined.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Versioned binary file that does not match what the loader expects.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace choreo
