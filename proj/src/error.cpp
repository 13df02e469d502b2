#include "minia/error.hpp"

namespace minia {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::DegenerateProjection: return "DegenerateProjection";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ScorerUnavailable: return "ScorerUnavailable";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::ScorerError: return "ScorerError";
    case ErrorCode::TooFewMethods: return "TooFewMethods";
    case ErrorCode::OrphanTrialId: return "OrphanTrialId";
    case ErrorCode::InsufficientRaters: return "InsufficientRaters";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

Error::Error(ErrorCode code, const std::string& message, std::uint64_t byte_offset)
    : std::runtime_error(std::string(to_string(code)) + ": " + message + " (at byte " +
                         std::to_string(byte_offset) + ")"),
      code_(code),
      byte_offset_(byte_offset) {}

}  // namespace minia
