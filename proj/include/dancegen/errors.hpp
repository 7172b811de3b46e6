#pragma once

#include <stdexcept>
#include <string>

namespace dancegen {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not conform (matmul inner dims, concat widths, ...).
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required (NaN loss, inf gradient).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File and format problems (bad headers, truncated blobs, missing clips).
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Bad or unknown configuration keys/values.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace dancegen
