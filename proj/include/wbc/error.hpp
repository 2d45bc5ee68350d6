#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wbc {

enum class ErrorKind {
  DegenerateInput,
  RegionTooSmall,
  NonSymmetric,
  NotPositiveDefinite,
  LengthMismatch,
  EmptyInput,
  EmptyClass,
  SingularScatter,
  DimensionMismatch,
  Format,
  Io,
  Usage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::RegionTooSmall: return "RegionTooSmall";
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::SingularScatter: return "SingularScatter";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::Format: return "Format";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace wbc
