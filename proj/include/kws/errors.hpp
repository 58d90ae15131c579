#pragma once

#include <stdexcept>
#include <string>

namespace kws {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or axes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (e.g. backward from a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An out-of-range scalar parameter such as a non-positive perturbation ratio.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad or missing input data. Everything below maps to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed container (WAV, checkpoint, manifest).
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Audio or feature sequence shorter than an operation needs.
class TooShortError : public DataError {
 public:
  using DataError::DataError;
};

/// Checkpoint cannot be loaded: checksum, magic or shape disagreement.
class LoadError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace kws
