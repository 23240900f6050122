#pragma once

#include <stdexcept>
#include <string>

namespace rmgan {

/// Invalid or unknown configuration. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable or malformed input data. CLI maps this to exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric divergence: NaN/Inf values or a degenerate computation.
/// CLI maps this to exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rmgan
