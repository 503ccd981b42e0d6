#pragma once

#include <stdexcept>
#include <string>

namespace flake {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure (non-convergence, rank deficiency, non-finite input).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Shape or index mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Rejected input data (e.g. all-zero rows, malformed CSV cells).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Wire / session violations: bad frames, mismatched widths, missing parties.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Envelope authentication or decryption failure.
class CryptoError : public Error {
 public:
  using Error::Error;
};

/// File and socket level failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flake
