#pragma once

#include <stdexcept>
#include <string>

namespace pnl {

/// Invalid or inconsistent configuration (unknown keys, out-of-range values,
/// stale artifacts such as a bank built for another radius).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training loss became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem or decoding failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pnl
