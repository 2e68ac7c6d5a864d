#pragma once

#include <stdexcept>
#include <string>

namespace methanet {

/// Error categories. The CLI maps each to a process exit code.
enum class ErrorKind {
  Validation,  // bad input values, shape mismatches, misaligned dates
  Numerical,   // blow-up, divergence, undefined metrics
  Io,          // missing files, unreadable or malformed streams
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Validation, "shape: " + what) {}
};

struct AlignmentError : Error {
  explicit AlignmentError(const std::string& what)
      : Error(ErrorKind::Validation, "alignment: " + what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::Io, "format: " + what) {}
};

}  // namespace methanet
