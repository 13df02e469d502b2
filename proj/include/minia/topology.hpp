#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "minia/mesh.hpp"

namespace minia {

/// Edge-topological soundness of a triangle mesh.
///
/// Every undirected edge falls into exactly one of three classes: boundary
/// (one incident face), interior (two) or nonmanifold (three or more). An
/// interior edge is inconsistently oriented when both faces traverse it in
/// the same direction. Watertight means no boundary, no nonmanifold and no
/// inconsistent edge; with several components that is "every component is a
/// closed, consistently oriented surface".
struct TopologyReport {
  std::size_t vertex_count = 0;  // referenced vertices after welding
  std::size_t face_count = 0;    // faces after welding
  std::size_t collapsed_face_count = 0;
  std::size_t edge_count = 0;
  std::size_t boundary_edge_count = 0;
  std::size_t nonmanifold_edge_count = 0;
  std::size_t inconsistent_orientation_edge_count = 0;
  std::size_t connected_component_count = 0;
  bool is_watertight = false;

  long long euler_characteristic() const {
    return static_cast<long long>(vertex_count) - static_cast<long long>(edge_count) +
           static_cast<long long>(face_count);
  }
};

struct TopologyOptions {
  /// Vertices with bit-identical coordinates are always merged. A positive
  /// tolerance additionally merges vertices closer than this distance.
  std::optional<double> weld_tolerance;
};

TopologyReport analyze_topology(const TriangleMesh& mesh, const TopologyOptions& options = {});

/// Fraction of reports that are watertight. Throws EmptyInput on an empty list.
double watertight_percentage(std::span<const TopologyReport> reports);

}  // namespace minia
