#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "minia/scorer.hpp"

namespace minia {

enum class ScoreOp { handshake, clip_similarity, lpips };

std::string_view to_string(ScoreOp op) noexcept;

/// One request frame. Images travel as base64-encoded PNG.
struct ScoreRequest {
  std::uint64_t id = 0;
  ScoreOp op = ScoreOp::handshake;
  std::string image_a;
  std::string image_b;
};

struct ScoreResponse {
  std::uint64_t id = 0;
  std::optional<double> value;
  std::optional<ModelIds> model_ids;
  std::optional<std::string> error;
};

// Frames are single-line JSON objects without the trailing newline.
std::string encode_request(const ScoreRequest& request);
ScoreRequest decode_request(std::string_view frame);  // ProtocolViolation on bad input
std::string encode_response(const ScoreResponse& response);
ScoreResponse decode_response(std::string_view frame);  // ProtocolViolation on bad input

/// Client-side checks: the id must echo the request, errors become
/// ScorerError, and the payload must match the operation.
double expect_value(const ScoreResponse& response, std::uint64_t request_id);
ModelIds expect_models(const ScoreResponse& response, std::uint64_t request_id);

/// Server side: answers one frame with the given scorer. Never throws; a bad
/// frame produces an error response (id 0 when the id itself is unreadable).
std::string answer_frame(PerceptualScorer& scorer, std::string_view frame);

/// Answers frames from `in` until end of input.
void serve_stdio(PerceptualScorer& scorer, std::istream& in, std::ostream& out);

}  // namespace minia
