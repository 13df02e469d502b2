#include "minia/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include "minia/error.hpp"

namespace minia {
namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // Keeps the smaller index as root so representatives are order-stable.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<std::uint32_t> weld_exact(const std::vector<Vec3>& vertices) {
  std::vector<std::uint32_t> order(vertices.size());
  std::iota(order.begin(), order.end(), 0u);
  auto key = [&](std::uint32_t i) {
    return std::make_tuple(vertices[i].x(), vertices[i].y(), vertices[i].z(), i);
  };
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key(a) < key(b); });
  std::vector<std::uint32_t> rep(vertices.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t j = k;
    while (j < order.size() && vertices[order[j]] == vertices[order[k]]) ++j;
    for (std::size_t t = k; t < j; ++t) rep[order[t]] = order[k];  // order[k] is the smallest index
    k = j;
  }
  return rep;
}

std::vector<std::uint32_t> weld_tolerance(const std::vector<Vec3>& vertices, double tol) {
  struct CellHash {
    std::size_t operator()(const std::array<long long, 3>& c) const noexcept {
      std::size_t h = 1469598103934665603ull;
      for (auto v : c) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
      return h;
    }
  };
  std::unordered_map<std::array<long long, 3>, std::vector<std::uint32_t>, CellHash> grid;
  auto cell_of = [&](const Vec3& p) {
    return std::array<long long, 3>{static_cast<long long>(std::floor(p.x() / tol)),
                                    static_cast<long long>(std::floor(p.y() / tol)),
                                    static_cast<long long>(std::floor(p.z() / tol))};
  };
  DisjointSets sets(vertices.size());
  const double tol2 = tol * tol;
  for (std::uint32_t i = 0; i < vertices.size(); ++i) {
    const auto c = cell_of(vertices[i]);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (auto j : it->second) {
            if ((vertices[i] - vertices[j]).squaredNorm() <= tol2) sets.unite(i, j);
          }
        }
    grid[c].push_back(i);
  }
  std::vector<std::uint32_t> rep(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) rep[i] = static_cast<std::uint32_t>(sets.find(i));
  return rep;
}

struct HalfEdge {
  std::uint32_t lo, hi;
  bool forward;  // traversed lo -> hi
  std::uint32_t face;
};

}  // namespace

TopologyReport analyze_topology(const TriangleMesh& mesh, const TopologyOptions& options) {
  if (mesh.faces.empty()) throw Error(ErrorCode::EmptyMesh, "topology of an empty mesh");

  std::vector<std::uint32_t> rep = (options.weld_tolerance && *options.weld_tolerance > 0.0)
                                       ? weld_tolerance(mesh.vertices, *options.weld_tolerance)
                                       : weld_exact(mesh.vertices);

  TopologyReport report;
  std::vector<Face> faces;
  faces.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    Face w{rep[f[0]], rep[f[1]], rep[f[2]]};
    if (w[0] == w[1] || w[1] == w[2] || w[0] == w[2]) {
      ++report.collapsed_face_count;
      continue;
    }
    faces.push_back(w);
  }
  report.face_count = faces.size();
  if (faces.empty()) throw Error(ErrorCode::EmptyMesh, "every face collapsed during welding");

  std::vector<bool> used(mesh.vertices.size(), false);
  for (const auto& f : faces)
    for (auto v : f) used[v] = true;
  report.vertex_count = static_cast<std::size_t>(std::count(used.begin(), used.end(), true));

  std::vector<HalfEdge> half_edges;
  half_edges.reserve(faces.size() * 3);
  for (std::uint32_t fi = 0; fi < faces.size(); ++fi) {
    const auto& f = faces[fi];
    for (int k = 0; k < 3; ++k) {
      const auto a = f[k];
      const auto b = f[(k + 1) % 3];
      half_edges.push_back({std::min(a, b), std::max(a, b), a < b, fi});
    }
  }
  std::sort(half_edges.begin(), half_edges.end(), [](const HalfEdge& x, const HalfEdge& y) {
    return std::tie(x.lo, x.hi, x.face) < std::tie(y.lo, y.hi, y.face);
  });

  DisjointSets components(faces.size());
  for (std::size_t k = 0; k < half_edges.size();) {
    std::size_t j = k;
    while (j < half_edges.size() && half_edges[j].lo == half_edges[k].lo && half_edges[j].hi == half_edges[k].hi) ++j;
    const std::size_t uses = j - k;
    ++report.edge_count;
    if (uses == 1) {
      ++report.boundary_edge_count;
    } else if (uses == 2) {
      if (half_edges[k].forward == half_edges[k + 1].forward) ++report.inconsistent_orientation_edge_count;
    } else {
      ++report.nonmanifold_edge_count;
    }
    for (std::size_t t = k + 1; t < j; ++t) components.unite(half_edges[k].face, half_edges[t].face);
    k = j;
  }
  for (std::size_t f = 0; f < faces.size(); ++f)
    if (components.find(f) == f) ++report.connected_component_count;

  report.is_watertight = report.boundary_edge_count == 0 && report.nonmanifold_edge_count == 0 &&
                         report.inconsistent_orientation_edge_count == 0;
  return report;
}

double watertight_percentage(std::span<const TopologyReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no topology reports");
  const auto closed = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.is_watertight; });
  return static_cast<double>(closed) / static_cast<double>(reports.size());
}

}  // namespace minia
