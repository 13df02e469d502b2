#include "minia/mesh.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "minia/error.hpp"

namespace minia {

std::string_view to_string(SourceFormat format) noexcept {
  switch (format) {
    case SourceFormat::obj: return "obj";
    case SourceFormat::ply: return "ply";
    case SourceFormat::glb: return "glb";
    case SourceFormat::memory: return "memory";
  }
  return "memory";
}

TriangleMesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("vertex {} is not finite", i));
    }
  }
  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.faces.reserve(faces.size());
  const auto n = mesh.vertices.size();
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (auto idx : face) {
      if (idx >= n) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("face {} references vertex {} of {}", f, idx, n));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      ++mesh.dropped_degenerate_faces;
      continue;
    }
    mesh.faces.push_back(face);
  }
  if (mesh.faces.empty()) {
    throw Error(ErrorCode::EmptyMesh, "no faces after removing degenerate faces");
  }
  return mesh;
}

Aabb compute_aabb(const TriangleMesh& mesh) {
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw Error(ErrorCode::EmptyMesh, "bounding box of an empty mesh");
  }
  Aabb box;
  box.min = Vec3::Constant(std::numeric_limits<double>::infinity());
  box.max = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& v : mesh.vertices) {
    box.min = box.min.cwiseMin(v);
    box.max = box.max.cwiseMax(v);
  }
  return box;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.linear = linear.transpose();
  inv.translation = -(inv.linear * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.linear = linear * rhs.linear;
  out.translation = linear * rhs.translation + translation;
  return out;
}

TriangleMesh apply_transform(const TriangleMesh& mesh, const RigidTransform& transform) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = transform.apply(v);
  return out;
}

std::string to_obj(const TriangleMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 24);
  if (!mesh.method_id.empty() || !mesh.figure_id.empty()) {
    out += fmt::format("# method {} figure {}\n", mesh.method_id, mesh.figure_id);
  }
  for (const auto& v : mesh.vertices) {
    out += fmt::format("v {} {} {}\n", v.x(), v.y(), v.z());
  }
  for (const auto& f : mesh.faces) {
    out += fmt::format("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
  }
  return out;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  os << to_obj(mesh);
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace minia
