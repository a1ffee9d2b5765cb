#pragma once

#include <stdexcept>
#include <string>

namespace microgrid {

// Bad user input: malformed configs, shape mismatches, empty series.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A post-condition that the simulator guarantees was violated. These are bugs,
// and the CLI exits nonzero when one escapes.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Scenario files that fail validation; the message carries file and row.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace microgrid
