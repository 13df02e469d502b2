#include "minia/scorer_wire.hpp"

#include <istream>
#include <ostream>

#include "minia/codec.hpp"
#include "minia/error.hpp"

namespace minia {
namespace {

using json = nlohmann::json;

json parse_frame(std::string_view frame) {
  json doc = json::parse(frame, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::ProtocolViolation, "frame is not a JSON object");
  return doc;
}

std::uint64_t read_id(const json& doc) {
  const auto it = doc.find("id");
  if (it == doc.end() || !it->is_number_unsigned()) {
    throw Error(ErrorCode::ProtocolViolation, "frame lacks a non-negative integer id");
  }
  return it->get<std::uint64_t>();
}

std::optional<ScoreOp> op_from_string(std::string_view s) {
  if (s == "handshake") return ScoreOp::handshake;
  if (s == "clip_similarity") return ScoreOp::clip_similarity;
  if (s == "lpips") return ScoreOp::lpips;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ScoreOp op) noexcept {
  switch (op) {
    case ScoreOp::handshake: return "handshake";
    case ScoreOp::clip_similarity: return "clip_similarity";
    case ScoreOp::lpips: return "lpips";
  }
  return "handshake";
}

std::string encode_request(const ScoreRequest& request) {
  json doc = {{"id", request.id}, {"op", to_string(request.op)}};
  if (request.op != ScoreOp::handshake) {
    doc["image_a"] = request.image_a;
    doc["image_b"] = request.image_b;
  }
  return doc.dump();
}

ScoreRequest decode_request(std::string_view frame) {
  const json doc = parse_frame(frame);
  ScoreRequest req;
  req.id = read_id(doc);
  const auto op_it = doc.find("op");
  if (op_it == doc.end() || !op_it->is_string()) throw Error(ErrorCode::ProtocolViolation, "frame lacks op");
  const auto op = op_from_string(op_it->get<std::string>());
  if (!op) throw Error(ErrorCode::ProtocolViolation, "unknown op " + op_it->get<std::string>());
  req.op = *op;
  if (req.op != ScoreOp::handshake) {
    const auto a = doc.find("image_a");
    const auto b = doc.find("image_b");
    if (a == doc.end() || b == doc.end() || !a->is_string() || !b->is_string()) {
      throw Error(ErrorCode::ProtocolViolation, "scoring frame needs image_a and image_b strings");
    }
    req.image_a = a->get<std::string>();
    req.image_b = b->get<std::string>();
  }
  return req;
}

std::string encode_response(const ScoreResponse& response) {
  json doc = {{"id", response.id}};
  if (response.error) doc["error"] = *response.error;
  if (response.value) doc["value"] = *response.value;
  if (response.model_ids) {
    doc["model_ids"] = {{"clip", response.model_ids->clip}, {"lpips", response.model_ids->lpips}};
    doc["preprocessing"] = response.model_ids->preprocessing;
  }
  return doc.dump();
}

ScoreResponse decode_response(std::string_view frame) {
  const json doc = parse_frame(frame);
  ScoreResponse resp;
  resp.id = read_id(doc);
  if (auto it = doc.find("error"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::ProtocolViolation, "error must be a string");
    resp.error = it->get<std::string>();
  }
  if (auto it = doc.find("value"); it != doc.end() && !it->is_null()) {
    if (!it->is_number()) throw Error(ErrorCode::ProtocolViolation, "value must be a number");
    resp.value = it->get<double>();
  }
  if (auto it = doc.find("model_ids"); it != doc.end() && !it->is_null()) {
    if (!it->is_object() || !it->contains("clip") || !it->contains("lpips") || !(*it)["clip"].is_string() ||
        !(*it)["lpips"].is_string()) {
      throw Error(ErrorCode::ProtocolViolation, "model_ids must hold clip and lpips strings");
    }
    ModelIds ids{(*it)["clip"].get<std::string>(), (*it)["lpips"].get<std::string>(), json::object()};
    if (auto pre = doc.find("preprocessing"); pre != doc.end() && pre->is_object()) ids.preprocessing = *pre;
    resp.model_ids = std::move(ids);
  }
  return resp;
}

double expect_value(const ScoreResponse& response, std::uint64_t request_id) {
  if (response.id != request_id) {
    throw Error(ErrorCode::ProtocolViolation,
                "response id " + std::to_string(response.id) + " does not match request " + std::to_string(request_id));
  }
  if (response.error) throw Error(ErrorCode::ScorerError, *response.error);
  if (!response.value) throw Error(ErrorCode::ProtocolViolation, "response lacks value");
  return *response.value;
}

ModelIds expect_models(const ScoreResponse& response, std::uint64_t request_id) {
  if (response.id != request_id) {
    throw Error(ErrorCode::ProtocolViolation,
                "response id " + std::to_string(response.id) + " does not match request " + std::to_string(request_id));
  }
  if (response.error) throw Error(ErrorCode::ScorerError, *response.error);
  if (!response.model_ids) throw Error(ErrorCode::ProtocolViolation, "handshake response lacks model_ids");
  return *response.model_ids;
}

std::string answer_frame(PerceptualScorer& scorer, std::string_view frame) {
  ScoreResponse resp;
  try {
    const json doc = json::parse(frame, nullptr, false);
    if (doc.is_object() && doc.contains("id") && doc["id"].is_number_unsigned()) resp.id = doc["id"].get<std::uint64_t>();
    const ScoreRequest req = decode_request(frame);
    switch (req.op) {
      case ScoreOp::handshake:
        resp.model_ids = scorer.handshake();
        break;
      case ScoreOp::clip_similarity:
        resp.value = scorer.clip_similarity(base64_decode(req.image_a), base64_decode(req.image_b));
        break;
      case ScoreOp::lpips:
        resp.value = scorer.lpips(base64_decode(req.image_a), base64_decode(req.image_b));
        break;
    }
  } catch (const std::exception& e) {
    resp.value.reset();
    resp.model_ids.reset();
    resp.error = e.what();
  }
  return encode_response(resp);
}

void serve_stdio(PerceptualScorer& scorer, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << answer_frame(scorer, line) << '\n';
    out.flush();
  }
}

}  // namespace minia
