#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace minia {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<std::uint32_t, 3>;

enum class SourceFormat { obj, ply, glb, memory };

std::string_view to_string(SourceFormat format) noexcept;

/// Indexed triangle soup plus provenance. Invariants (enforced by
/// make_mesh and every loader): face indices are in range, no face repeats a
/// vertex, all coordinates are finite.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  SourceFormat source_format = SourceFormat::memory;
  std::string method_id;
  std::string figure_id;
  std::size_t dropped_degenerate_faces = 0;
};

/// Validates raw geometry and drops faces that repeat a vertex index.
/// Throws InvalidArgument for out-of-range indices or non-finite coordinates and
/// EmptyMesh when no face survives.
TriangleMesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 extents() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

Aabb compute_aabb(const TriangleMesh& mesh);

/// Affine map x -> linear * x + translation. Orientation candidates only use
/// signed permutation matrices here, but loaders also bake arbitrary glTF node
/// transforms through the same type.
struct RigidTransform {
  Mat3 linear = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }
  double determinant() const { return linear.determinant(); }

  /// Inverse for orthogonal linear parts.
  RigidTransform inverse() const;
  /// (a * b).apply(p) == a.apply(b.apply(p)).
  RigidTransform operator*(const RigidTransform& rhs) const;
};

/// Maps vertices exactly; faces are kept as-is even when the transform
/// mirrors, since rendering and topology are winding-agnostic where it matters.
TriangleMesh apply_transform(const TriangleMesh& mesh, const RigidTransform& transform);

// Loading. Format is picked from the extension, falling back to content sniffing.
TriangleMesh load_mesh(const std::filesystem::path& path, std::string method_id,
                       std::string figure_id);

TriangleMesh parse_obj(std::string_view text);
TriangleMesh parse_ply(std::string_view bytes);
TriangleMesh parse_glb(std::string_view bytes);

std::string to_obj(const TriangleMesh& mesh);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace minia
