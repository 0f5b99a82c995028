#pragma once

#include <stdexcept>
#include <string>

namespace oodrecon {

enum class ErrorKind {
  invalid_input,
  shape_mismatch,
  format,
  io,
  config,
  contract,
  divergence,
  empty_mask,
  invalid_spec,
};

/// Single exception type for all contract violations; `kind()` tells callers
/// (and the CLI exit-code mapping) which contract was broken.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::contract: return "contract";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::empty_mask: return "empty-mask";
    case ErrorKind::invalid_spec: return "invalid-spec";
  }
  return "unknown";
}

}  // namespace oodrecon
