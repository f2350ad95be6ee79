#pragma once

#include <stdexcept>
#include <string>

namespace ciss {

/// Invalid configuration value, unknown key, or unsupported option.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Incompatible tensor or image dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inaccessible data: bad files, out-of-range labels,
/// firewalled label reads.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, misuse of the tape, or a diverged optimizer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ciss
