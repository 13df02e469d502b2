#include "minia/candidate.hpp"

#include <fmt/format.h>

#include "minia/error.hpp"

namespace minia {

char axis_name(Axis axis) noexcept { return "xyz"[static_cast<int>(axis)]; }

namespace {

// Proper rotation taking the view axis onto camera +z by cyclic permutation.
Mat3 axis_to_camera(Axis axis) {
  Mat3 m = Mat3::Zero();
  switch (axis) {
    case Axis::x:  // camera (x, y, z) = model (y, z, x)
      m(0, 1) = 1; m(1, 2) = 1; m(2, 0) = 1;
      break;
    case Axis::y:  // camera (x, y, z) = model (z, x, y)
      m(0, 2) = 1; m(1, 0) = 1; m(2, 1) = 1;
      break;
    case Axis::z:
      m.setIdentity();
      break;
  }
  return m;
}

Mat3 quarter_turns(int k) {
  static constexpr int cosines[4] = {1, 0, -1, 0};
  static constexpr int sines[4] = {0, 1, 0, -1};
  Mat3 m = Mat3::Identity();
  m(0, 0) = cosines[k];
  m(0, 1) = -sines[k];
  m(1, 0) = sines[k];
  m(1, 1) = cosines[k];
  return m;
}

}  // namespace

OrientationCandidate OrientationCandidate::make(Axis view_axis, int index) {
  if (index < 0 || index >= 16) throw Error(ErrorCode::InvalidArgument, fmt::format("candidate index {}", index));
  OrientationCandidate c;
  c.index = index;
  c.view_axis = view_axis;
  c.positive_direction = (index / 8) == 0;
  const int rotation = (index / 2) % 4;
  c.inplane_rotation_deg = 90 * rotation;
  c.mirrored = (index % 2) == 1;

  Mat3 m = axis_to_camera(view_axis);
  if (!c.positive_direction) m = Eigen::Vector3d(-1, 1, -1).asDiagonal() * m;  // half turn about image up
  m = quarter_turns(rotation) * m;
  if (c.mirrored) m = Eigen::Vector3d(-1, 1, 1).asDiagonal() * m;
  c.as_transform.linear = m;
  return c;
}

std::string OrientationCandidate::label() const {
  return fmt::format("{}{} r{}{}", positive_direction ? '+' : '-', axis_name(view_axis), inplane_rotation_deg,
                     mirrored ? " m" : "");
}

Axis thinnest_axis(const Aabb& box) {
  const Vec3 e = box.extents();
  if (e.maxCoeff() <= 0.0) throw Error(ErrorCode::DegenerateBox, "all bounding box extents are zero");
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (e[i] < e[best]) best = i;
  return static_cast<Axis>(best);
}

std::array<OrientationCandidate, 16> enumerate_candidates(Axis view_axis) {
  std::array<OrientationCandidate, 16> out;
  for (int i = 0; i < 16; ++i) out[i] = OrientationCandidate::make(view_axis, i);
  return out;
}

}  // namespace minia
