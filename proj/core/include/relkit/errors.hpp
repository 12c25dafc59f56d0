#pragma once

#include <stdexcept>
#include <string>

namespace relkit {

// Bad shapes or dimension mismatches in numeric code.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range ids (embedding lookups, class targets).
struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (backward called twice, non-scalar root, ...).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed input files; message carries the line number where known.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: unknown keys, missing files, inconsistent toggles.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures mid-run: non-finite loss, corrupt checkpoint.
struct RuntimeFailure : std::runtime_error {
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace relkit
