#include "minia/orient.hpp"

#include <fmt/format.h>

#include "minia/error.hpp"
#include "minia/metrics.hpp"

namespace minia {

OrientationResult detect_orientation(const TriangleMesh& mesh, const ReferenceImage& reference,
                                     const RenderConfig& config, PerceptualScorer& scorer) {
  const Axis axis = thinnest_axis(compute_aabb(mesh));
  const auto candidates = enumerate_candidates(axis);

  OrientationResult result;
  result.working_reference = fit_reference(reference, config);
  result.reference_mask = alpha_mask(result.working_reference);
  result.reference_composite_png = encode_png(composite_on_gray(result.working_reference, config));

  double best = 0.0;
  for (int i = 0; i < 16; ++i) {
    try {
      result.renders[i] = render(mesh, candidates[i], config);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateProjection) throw;
      result.per_candidate_iou[i] = 0.0;
      continue;
    }
    result.per_candidate_iou[i] = silhouette_iou(result.renders[i]->depth_mask, result.reference_mask);
    best = std::max(best, result.per_candidate_iou[i]);
  }
  result.gate_threshold = 0.5 * best;
  for (int i = 0; i < 16; ++i) {
    if (result.renders[i] && result.per_candidate_iou[i] >= result.gate_threshold) result.eligible.push_back(i);
  }
  if (result.eligible.empty()) throw Error(ErrorCode::DegenerateProjection, "every candidate projection is degenerate");

  int winner = result.eligible.front();
  double winner_clip = -2.0;
  for (int i : result.eligible) {
    const double clip = scorer.clip_similarity(encode_png(result.renders[i]->shaded), result.reference_composite_png);
    result.per_eligible_clip[i] = clip;
    if (clip > winner_clip) {  // strict: ties keep the lower index
      winner_clip = clip;
      winner = i;
    }
  }
  result.winner = candidates[winner];
  return result;
}

nlohmann::json orientation_to_json(const OrientationResult& result) {
  nlohmann::json doc;
  doc["view_axis"] = std::string(1, axis_name(result.winner.view_axis));
  doc["winner"] = result.winner.index;
  doc["winner_label"] = result.winner.label();
  doc["gate_threshold"] = result.gate_threshold;
  doc["eligible"] = result.eligible;
  auto& cands = doc["candidates"] = nlohmann::json::array();
  for (int i = 0; i < 16; ++i) {
    const auto c = OrientationCandidate::make(result.winner.view_axis, i);
    nlohmann::json entry = {{"index", i},
                            {"label", c.label()},
                            {"iou", result.per_candidate_iou[i]},
                            {"degenerate", !result.renders[i].has_value()}};
    entry["clip"] = result.per_eligible_clip[i] ? nlohmann::json(*result.per_eligible_clip[i]) : nlohmann::json();
    cands.push_back(std::move(entry));
  }
  return doc;
}

void dump_orientation_debug(const OrientationResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 16; ++i) {
    if (!result.renders[i]) continue;
    write_file(dir / fmt::format("candidate_{:02d}.png", i), encode_png(result.renders[i]->shaded));
  }
  write_file(dir / "reference_composite.png", result.reference_composite_png);
  const std::string text = orientation_to_json(result).dump(2) + "\n";
  write_file(dir / "orientation.json",
             std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace minia
