#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minia/candidate.hpp"
#include "minia/image.hpp"
#include "minia/mesh.hpp"
#include "minia/raster.hpp"
#include "minia/scorer.hpp"

namespace minia {

/// |A and B| / |A or B|; 1 when both masks are empty. Throws DimensionMismatch.
double silhouette_iou(const Mask& a, const Mask& b);

/// Extent along the view axis divided by the larger of the other two.
/// Throws DegenerateBox when both in-plane extents are zero.
double depth_range_ratio(const Aabb& box, Axis view_axis);

struct MetricRecord {
  std::string figure_id;
  std::string method_id;
  double silhouette_iou = 0.0;
  double lpips = 0.0;
  double clip_score = 0.0;
  double depth_range_ratio = 0.0;
  bool is_watertight = false;
  int orientation_index = 0;
  Axis view_axis = Axis::z;
};

/// A (figure, method) pair that could not be evaluated.
struct FigureError {
  std::string figure_id;
  std::string method_id;
  std::string code;
  std::string message;
};

struct AggregateRow {
  std::string method_id;
  std::string dataset_id;
  double mean_iou = 0.0;
  double mean_lpips = 0.0;
  double mean_clip = 0.0;
  double mean_depth_ratio = 0.0;
  double watertight_pct = 0.0;  // fraction in [0, 1]
  std::size_t figure_count = 0;  // records averaged
  std::size_t error_count = 0;   // figures of this method that failed
};

/// Full per-figure procedure: orientation search, winner render, silhouette
/// IoU, perceptual scores on gray composites, depth ratio in the detected
/// camera frame and watertightness of the raw mesh.
MetricRecord evaluate_figure(const TriangleMesh& mesh, const ReferenceImage& reference, const RenderConfig& config,
                             PerceptualScorer& scorer);

/// Arithmetic means per method, rows sorted by method id. Means are summed in
/// sorted order, so the result does not depend on record order at all.
/// Throws EmptyInput on an empty list.
std::vector<AggregateRow> aggregate(std::span<const MetricRecord> records, const std::string& dataset_id);

}  // namespace minia
