#pragma once

#include <stdexcept>
#include <string>

namespace extmem {

/// Invalid user-supplied configuration (manifest values, data files, parameters).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (dimension mismatch, unnormalized input, ...).
struct contract_violation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Exhaustive enumeration would exceed the configured path budget.
struct enumeration_too_large : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void expects(bool condition, const std::string& what) {
  if (!condition) throw contract_violation(what);
}

}  // namespace extmem
