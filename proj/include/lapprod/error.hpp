#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lapprod {

// Base for every error raised by the library. Callers that only care about
// success/failure catch this; the CLI maps it to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}

  std::size_t iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

// Raised when a persisted file fails its checksum or layout checks.
class CorruptFile : public Error {
 public:
  using Error::Error;
};

}  // namespace lapprod
