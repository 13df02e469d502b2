#pragma once

#include <array>
#include <string>

#include "minia/mesh.hpp"

namespace minia {

enum class Axis : int { x = 0, y = 1, z = 2 };

char axis_name(Axis axis) noexcept;

/// One of the 16 front-view hypotheses for a given thinnest axis.
///
/// index = direction * 8 + rotation * 2 + mirror, where direction 0 views the
/// +axis side (the +axis points at the camera), rotation counts
/// counter-clockwise quarter turns about the view axis and mirror flips the
/// image left-right. as_transform maps model space into camera space: image
/// right = +x, image up = +y, the camera looks down -z.
struct OrientationCandidate {
  int index = 0;
  Axis view_axis = Axis::z;
  bool positive_direction = true;
  int inplane_rotation_deg = 0;
  bool mirrored = false;
  RigidTransform as_transform;

  static OrientationCandidate make(Axis view_axis, int index);

  /// e.g. "+z r90 m"
  std::string label() const;
};

/// argmin of the box extents, ties resolved toward x then y then z.
/// Throws DegenerateBox when every extent is zero.
Axis thinnest_axis(const Aabb& box);

std::array<OrientationCandidate, 16> enumerate_candidates(Axis view_axis);

}  // namespace minia
