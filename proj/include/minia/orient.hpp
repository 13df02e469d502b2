#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "minia/candidate.hpp"
#include "minia/image.hpp"
#include "minia/raster.hpp"
#include "minia/scorer.hpp"

namespace minia {

struct OrientationResult {
  OrientationCandidate winner;
  std::array<double, 16> per_candidate_iou{};
  double gate_threshold = 0.0;  // half the best IoU
  std::vector<int> eligible;    // ascending candidate indices with IoU >= gate
  std::array<std::optional<double>, 16> per_eligible_clip;

  // Intermediate products, kept so the winner's render is scored without
  // re-rendering. renders[i] is empty for a degenerate projection.
  std::array<std::optional<RenderOutput>, 16> renders;
  ReferenceImage working_reference;
  Mask reference_mask;
  PngBytes reference_composite_png;

  const RenderOutput& winner_render() const { return *renders[winner.index]; }
};

/// Front-view search: thinnest box axis, 16 candidates, IoU gate at half the
/// best IoU, then the eligible candidate most CLIP-similar to the reference
/// (ties to the lowest index). Scorer failures propagate.
OrientationResult detect_orientation(const TriangleMesh& mesh, const ReferenceImage& reference,
                                     const RenderConfig& config, PerceptualScorer& scorer);

nlohmann::json orientation_to_json(const OrientationResult& result);

/// Writes candidate_XX.png for every candidate plus orientation.json.
void dump_orientation_debug(const OrientationResult& result, const std::filesystem::path& dir);

}  // namespace minia
