#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vrd {

// Base for every recoverable, user-facing failure (bad input, missing data).
// Anything else escaping the library is an internal invariant violation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Input parse failure carrying a 1-based line number (0 when not line-oriented).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vrd
