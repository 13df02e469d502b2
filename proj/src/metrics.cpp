#include "minia/metrics.hpp"

#include <algorithm>
#include <map>

#include "minia/error.hpp"
#include "minia/orient.hpp"
#include "minia/topology.hpp"

namespace minia {

double silhouette_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::DimensionMismatch, "masks differ in size");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double depth_range_ratio(const Aabb& box, Axis view_axis) {
  const Vec3 e = box.extents();
  const int d = static_cast<int>(view_axis);
  const double in_plane = std::max(e[(d + 1) % 3], e[(d + 2) % 3]);
  if (!(in_plane > 0.0)) throw Error(ErrorCode::DegenerateBox, "in-plane extents are both zero");
  return e[d] / in_plane;
}

MetricRecord evaluate_figure(const TriangleMesh& mesh, const ReferenceImage& reference, const RenderConfig& config,
                             PerceptualScorer& scorer) {
  const OrientationResult orientation = detect_orientation(mesh, reference, config, scorer);
  const RenderOutput& winner = orientation.winner_render();
  const PngBytes winner_png = encode_png(winner.shaded);

  MetricRecord record;
  record.figure_id = mesh.figure_id;
  record.method_id = mesh.method_id;
  record.orientation_index = orientation.winner.index;
  record.view_axis = orientation.winner.view_axis;
  record.silhouette_iou = orientation.per_candidate_iou[orientation.winner.index];
  record.clip_score = *orientation.per_eligible_clip[orientation.winner.index];
  record.lpips = scorer.lpips(winner_png, orientation.reference_composite_png);

  // camera frame: the detected view axis is z
  const TriangleMesh normalized = apply_transform(mesh, orientation.winner.as_transform);
  record.depth_range_ratio = depth_range_ratio(compute_aabb(normalized), Axis::z);
  record.is_watertight = analyze_topology(mesh).is_watertight;
  return record;
}

std::vector<AggregateRow> aggregate(std::span<const MetricRecord> records, const std::string& dataset_id) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no metric records to aggregate");
  std::map<std::string, std::vector<const MetricRecord*>> by_method;
  for (const auto& r : records) by_method[r.method_id].push_back(&r);

  auto sorted_mean = [](std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
  };

  std::vector<AggregateRow> rows;
  for (const auto& [method, group] : by_method) {
    std::vector<double> iou, lp, clip, depth;
    std::size_t closed = 0;
    for (const auto* r : group) {
      iou.push_back(r->silhouette_iou);
      lp.push_back(r->lpips);
      clip.push_back(r->clip_score);
      depth.push_back(r->depth_range_ratio);
      closed += r->is_watertight ? 1 : 0;
    }
    AggregateRow row;
    row.method_id = method;
    row.dataset_id = dataset_id;
    row.mean_iou = sorted_mean(std::move(iou));
    row.mean_lpips = sorted_mean(std::move(lp));
    row.mean_clip = sorted_mean(std::move(clip));
    row.mean_depth_ratio = sorted_mean(std::move(depth));
    row.watertight_pct = static_cast<double>(closed) / static_cast<double>(group.size());
    row.figure_count = group.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace minia
