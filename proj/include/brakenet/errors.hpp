#pragma once

#include <stdexcept>
#include <string>

namespace brakenet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up (conv channels, pooling window, model input).
struct DimensionError : Error {
  using Error::Error;
};

// Bad user configuration: ratios, epochs, batch size, unknown model kind.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or inconsistent input files.
struct DataError : Error {
  using Error::Error;
};

struct SchemaError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  using DataError::DataError;
};

struct RangeError : DataError {
  using DataError::DataError;
};

// Non-finite loss during training.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace brakenet
