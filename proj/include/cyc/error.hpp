#pragma once

#include <stdexcept>
#include <string>

namespace cyc {

// Single exception type for the library; `kind` lets tests and the CLI
// distinguish failure classes without parsing messages.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    shape,          // dimension mismatch between operands
    config,         // invalid or inconsistent configuration
    label,          // class label out of range
    data,           // empty/degenerate dataset
    format,         // malformed file (bad magic, truncation, checksum)
    bounds,         // slice exceeds the underlying recording
    contract,       // caller violated an API precondition
    determinism,    // repeated forward passes disagreed
    compatibility,  // checkpoint and dataset shapes disagree
  };

  Error(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace cyc
