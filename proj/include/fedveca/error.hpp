#pragma once

#include <stdexcept>
#include <string>

namespace fedveca {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Violated precondition: dimension mismatch, empty batch, bad argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced where finite math was required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Parameters left the finite range during training; names the iteration.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// IDX reader failures, one type per failure mode.
class IdxMagicError : public IoError {
 public:
  using IoError::IoError;
};
class IdxTruncatedError : public IoError {
 public:
  using IoError::IoError;
};
class IdxCountError : public IoError {
 public:
  using IoError::IoError;
};

// Wire-format failures, one type per failure mode.
class FramingError : public Error {
 public:
  using Error::Error;
};
class BadTagError : public FramingError {
 public:
  using FramingError::FramingError;
};
class TruncatedFrameError : public FramingError {
 public:
  using FramingError::FramingError;
};
class LengthMismatchError : public FramingError {
 public:
  using FramingError::FramingError;
};
class FrameTooLargeError : public FramingError {
 public:
  using FramingError::FramingError;
};

class TransportError : public Error {
 public:
  using Error::Error;
};
class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

// A round could not complete; carries the id of the client that failed.
class RoundAbortError : public TransportError {
 public:
  RoundAbortError(const std::string& what, std::uint32_t client_id)
      : TransportError(what), client_id_(client_id) {}
  std::uint32_t client_id() const { return client_id_; }

 private:
  std::uint32_t client_id_;
};

}  // namespace fedveca
