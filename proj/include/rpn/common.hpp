#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rpn {

// Scalar used throughout the codec. Training and coding both run in double
// so that rate estimates, gradient checks and encoder/decoder replay agree.
using Real = double;

// Malformed bytes: bad magic, truncated header, corrupt segment.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or operating parameters (levels, lambdas, paths).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape mismatch between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or otherwise unrecoverable optimization state.
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void check_format(bool ok, const std::string& msg) {
  if (!ok) throw FormatError(msg);
}

}  // namespace rpn
