#pragma once

#include <stdexcept>
#include <string>

namespace cno {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad configuration values, malformed parameters, shape mismatches.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A persisted file could not be decoded (magic, version, truncation, checksum, metadata).
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatVersionError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedFileError : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

class MetadataMismatchError : public DataError {
 public:
  using DataError::DataError;
};

/// An explicit scheme was asked to take a step outside its stability region.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during time integration or training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A kernel probe fell below the divisor floor.
class DegenerateKernelError : public Error {
 public:
  using Error::Error;
};

/// Frozen weights changed during aggregator fine-tuning.
class FreezeViolationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cno
