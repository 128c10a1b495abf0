#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcnet {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A softmax row with no live entry.
class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a forward op.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace tcnet
