#pragma once

#include <cstdint>

#include "minia/candidate.hpp"
#include "minia/image.hpp"
#include "minia/mesh.hpp"

namespace minia {

/// Fixed camera and material for geometry-only renders. None of these values
/// come from the evaluated methods; they are recorded in every report.
struct RenderConfig {
  int resolution = 512;
  double margin_fraction = 0.05;  // empty fraction of the frame on each side
  std::uint8_t background_gray = 128;
  double albedo = 0.75;
  double ambient = 0.25;
  Vec3 light_direction{0.0, 0.0, -1.0};  // camera space; default is the view direction

  /// Throws InvalidArgument when any field is out of range.
  void validate() const;
};

/// RGBA crop of the source artwork; alpha is the silhouette.
struct ReferenceImage {
  RgbaImage rgba;
  std::uint8_t alpha_threshold = 128;
};

struct RenderOutput {
  RgbImage shaded;
  Mask depth_mask;
  FloatImage depth_buffer;  // distance behind the front of the framed box, in pixels; +inf when empty
};

/// Orthographic, z-buffered, double-sided flat-shaded render along the
/// candidate's view axis. The mesh is centered on its box and scaled so the
/// larger in-plane extent spans (1 - 2 * margin) of the frame. Throws
/// DegenerateProjection when both in-plane extents are zero.
RenderOutput render(const TriangleMesh& mesh, const OrientationCandidate& view, const RenderConfig& config);

/// Same as render() for an arbitrary model-to-camera transform.
RenderOutput render_view(const TriangleMesh& mesh, const RigidTransform& to_camera, const RenderConfig& config);

/// round(alpha * rgb + (1 - alpha) * gray) per channel, at the reference's size.
RgbImage composite_on_gray(const ReferenceImage& reference, const RenderConfig& config);

/// alpha >= alpha_threshold.
Mask alpha_mask(const ReferenceImage& reference);

/// Resamples the reference into the square working frame used by renders:
/// the tight box of its alpha mask is centered and scaled so its larger side
/// spans (1 - 2 * margin) of config.resolution. Outside the box is transparent.
ReferenceImage fit_reference(const ReferenceImage& reference, const RenderConfig& config);

/// Reference whose RGB is the shaded render and whose alpha is the coverage mask.
ReferenceImage reference_from_render(const RenderOutput& render);

}  // namespace minia
