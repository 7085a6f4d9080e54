#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trace {

/// Base class for every error raised by the library. Subclasses name the
/// failure family so callers can react without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Corpus generation could not realise a frame slot.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Unknown word during tokenisation.
class TokenizationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mismatched input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced by a numeric kernel.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::int64_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

/// Too few points for a nearest-neighbour estimator.
class SampleSizeError : public Error {
 public:
  using Error::Error;
};

/// Lanczos iteration hit a non-finite operator output.
class SpectralError : public Error {
 public:
  SpectralError(const std::string& what, int iteration)
      : Error(what + " (lanczos iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// Metric series that do not share a checkpoint grid.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// File format or I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invariant violated inside the library (a bug, not bad input).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace trace
