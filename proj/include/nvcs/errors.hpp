#pragma once

#include <stdexcept>
#include <string>

namespace nvcs {

// Usage / configuration problem. The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data files. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  enum class Kind {
    Format,
    BadMagic,
    VersionMismatch,
    Truncated,
    DimMismatch,
    MissingFile,
  };

  DataError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}

  Kind kind;
};

// Non-finite values where finite ones are required (divergence, bad input).
// The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nvcs
