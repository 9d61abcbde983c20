#pragma once

#include <stdexcept>
#include <string>

namespace mlsched {

// Bad user input: unknown attribute, unknown transaction type, malformed
// config key. The CLI maps this to exit status 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (length mismatch and the like).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Learning could not proceed: empty log, single-class training set,
// no abort vectors for clustering.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or version-mismatched serialized artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlsched
