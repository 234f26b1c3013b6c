#pragma once

#include <stdexcept>
#include <string>

namespace ddcm {

// Base of every error raised by the library. Subclasses map one-to-one onto
// the CLI's diagnostic classes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Non-finite state, degenerate normalisation, broken likelihood provider.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ModelMismatch : public Error {
 public:
  using Error::Error;
};

class TruncatedStream : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

class CorruptStream : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

}  // namespace ddcm
