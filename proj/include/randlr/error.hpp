#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace randlr {

enum class ErrorKind {
  InvalidArgument,  // precondition violated by the caller
  Config,           // malformed or inconsistent experiment configuration
  Diverged,         // non-finite or exploding state during a run
  Verification,     // a statistical check failed
  Parse,            // malformed input file
  Io,
  Capacity,         // request too large (enumeration, storage) or too small (samples)
  OutOfRange,       // requested more items than a source holds
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::Parse, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what) : Error(ErrorKind::Capacity, what) {}
};

class OutOfRangeError : public Error {
 public:
  explicit OutOfRangeError(const std::string& what) : Error(ErrorKind::OutOfRange, what) {}
};

class VerificationError : public Error {
 public:
  explicit VerificationError(const std::string& what) : Error(ErrorKind::Verification, what) {}
};

/// Raised when an iterate becomes non-finite or leaves the divergence ball.
class DivergedError : public Error {
 public:
  DivergedError(std::uint64_t step, const std::string& what)
      : Error(ErrorKind::Diverged, what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

}  // namespace randlr
