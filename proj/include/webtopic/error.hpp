#pragma once

#include <stdexcept>
#include <string>

namespace webtopic {

/// Caller supplied something malformed: bad URL, corrupt file, violated precondition.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or template.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// Operation called on an object in the wrong state (e.g. transform before fit).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Backend could not be reached or the connection broke.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Backend answered, but the answer violates the wire protocol or reports failure.
class ProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// An internal invariant did not hold.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace webtopic
