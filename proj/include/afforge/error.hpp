#ifndef AFFORGE_ERROR_HPP
#define AFFORGE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace afforge {

enum class ErrorKind {
  InvalidArgument,
  BehindCamera,
  NonPositiveDepth,
  OutOfRange,
  DimensionMismatch,
  LengthMismatch,
  EmptyInput,
  NoVisiblePoints,
  MissingAlpha,
  ServiceUnreachable,
  MalformedResponse,
  Timeout,
  CorruptBlob,
  SchemaVersionMismatch,
  UnknownId,
  NotFound,
  UnknownView,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NoVisiblePoints: return "NoVisiblePoints";
    case ErrorKind::MissingAlpha: return "MissingAlpha";
    case ErrorKind::ServiceUnreachable: return "ServiceUnreachable";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::CorruptBlob: return "CorruptBlob";
    case ErrorKind::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::UnknownView: return "UnknownView";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Transport-level failures are retried with backoff; everything else is not.
  bool is_transport() const noexcept {
    return kind_ == ErrorKind::ServiceUnreachable || kind_ == ErrorKind::Timeout;
  }

 private:
  ErrorKind kind_;
};

}  // namespace afforge

#endif  // AFFORGE_ERROR_HPP
