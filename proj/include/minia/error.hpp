#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace minia {

enum class ErrorCode {
  UnsupportedFormat,
  MalformedFile,
  EmptyMesh,
  EmptyInput,
  DegenerateBox,
  DegenerateProjection,
  DimensionMismatch,
  InvalidArgument,
  ScorerUnavailable,
  Timeout,
  ProtocolViolation,
  ScorerError,
  TooFewMethods,
  OrphanTrialId,
  InsufficientRaters,
  ManifestInvalid,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. MalformedFile errors also carry
/// the byte offset where parsing failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  Error(ErrorCode code, const std::string& message, std::uint64_t byte_offset);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint64_t> byte_offset() const noexcept { return byte_offset_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> byte_offset_;
};

}  // namespace minia
