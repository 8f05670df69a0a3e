#pragma once

#include <stdexcept>
#include <string>

namespace causalib {

// Error taxonomy. Every throwing path in the library uses one of these so
// callers (and the CLI exit-code mapping) can tell failure classes apart.

/// Operand shapes do not conform to an operation's shape rule.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A value left the operation's numeric domain (NaN/Inf, log of non-positive, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A call violated an API precondition (non-scalar backward root, batch_size 0, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Input bytes do not match the expected file format (bad magic, bad record size).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two inputs that must agree do not (image count vs label count).
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Payload shorter than its header promises.
struct LengthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Instrument covariance too close to zero for a usable IV estimate.
struct WeakInstrumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (missing file, short read, write error).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace causalib
