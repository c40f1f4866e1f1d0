#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpnet {

// Coarse error categories. The CLI maps each one to an exit code and prints
// the category name as a machine-parsable prefix.
enum class ErrorKind {
  shape,     // tensor or layer dimensions do not line up
  value,     // argument outside its documented domain
  state,     // operation invalid in the current object state
  numeric,   // NaN/Inf or divergence
  io,        // filesystem or file format problems
  config,    // invalid run configuration
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::value: return "value";
    case ErrorKind::state: return "state";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace cpnet
