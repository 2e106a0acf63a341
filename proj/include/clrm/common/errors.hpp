#pragma once

#include <stdexcept>
#include <string>

namespace clrm {

/// Invalid input to an operation (bad shape, out-of-range value, malformed request).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in a state that does not permit it.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration document is malformed, has unknown keys, or violates a schema invariant.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A persisted artifact (container, checkpoint, manifest) could not be read or does not match.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clrm
