#pragma once

#include <stdexcept>
#include <string>

namespace stereo4p {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor, volume or image dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument is outside its admissible range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded (bad header, truncated payload, checksum).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A key/value configuration is missing a key or carries an invalid value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Weights were produced for a different network layout.
class SpecMismatchError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace stereo4p
