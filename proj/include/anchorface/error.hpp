#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anchorface {

enum class ErrorKind {
  InvalidInput,
  EmptyInput,
  ShapeMismatch,
  DegenerateEye,
  Config,
  InsufficientPoseCoverage,
  Index,
  Frame,
  Domain,
  State,
  Divergence,
  NoConfidentAnchor,
  Parse,
  CountMismatch,
  DegenerateBox,
  OutOfBounds,
  Normalization,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::DegenerateEye: return "degenerate-eye";
    case ErrorKind::Config: return "config";
    case ErrorKind::InsufficientPoseCoverage: return "insufficient-pose-coverage";
    case ErrorKind::Index: return "index";
    case ErrorKind::Frame: return "frame";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::State: return "state";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::NoConfidentAnchor: return "no-confident-anchor";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::CountMismatch: return "count-mismatch";
    case ErrorKind::DegenerateBox: return "degenerate-box";
    case ErrorKind::OutOfBounds: return "out-of-bounds";
    case ErrorKind::Normalization: return "normalization";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {
[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }
}  // namespace detail

}  // namespace anchorface
