#pragma once

#include <stdexcept>
#include <string>

namespace mmnet {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor rank / axis-size mismatches.
struct DimensionError : Error {
  using Error::Error;
};

// Spatial geometry that cannot work (odd pool input, empty conv output, ...).
struct GeometryError : Error {
  using Error::Error;
};

// Invalid hyperparameters or malformed config files.
struct ConfigError : Error {
  using Error::Error;
};

// NaN/Inf encountered where the contract requires finite values.
struct NumericError : Error {
  using Error::Error;
};

// Misuse of the autograd graph (backward on a consumed graph, non-scalar loss).
struct AutogradError : Error {
  using Error::Error;
};

// Dataset protocol violations (single-subject LOSO, empty training set, ...).
struct ProtocolError : Error {
  using Error::Error;
};

// Labels outside the configured class range.
struct LabelError : Error {
  using Error::Error;
};

// File reading/writing failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace mmnet
