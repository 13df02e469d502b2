#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "minia/harness.hpp"
#include "minia/mesh.hpp"
#include "minia/raster.hpp"
#include "minia/scorer.hpp"

namespace minia::fixtures {

// Closed solids are wound with outward normals.
TriangleMesh tetrahedron(const Vec3& offset = Vec3::Zero());
TriangleMesh cube(const Vec3& scale = Vec3::Ones());  // [0,1]^3 scaled per axis
TriangleMesh box(const Vec3& lo, const Vec3& hi);
TriangleMesh icosphere(int subdivisions, double radius = 1.0);
TriangleMesh torus(int major_segments, int minor_segments, double major_radius = 1.0, double minor_radius = 0.3);

TriangleMesh open_box();             // cube without its top two triangles
TriangleMesh fin();                  // three triangles sharing one edge
TriangleMesh cube_with_fin();        // cube plus one triangle hanging off an edge
TriangleMesh mixed_winding_sphere();  // icosphere with one face reversed
TriangleMesh disjoint_tetrahedra();
TriangleMesh disk(int segments, double radius = 0.5);  // fan in z = 0
TriangleMesh single_triangle();
TriangleMesh unit_square();  // [0,1]^2 at z = 0, two triangles
TriangleMesh mobius_strip(int segments);
TriangleMesh unwelded(const TriangleMesh& mesh);  // every face gets its own copies of its corners

// Hexahedron over [x0,x1]x[y0,y1] with bottom z = 0 and a top plane rising
// linearly in x from h0 to h1.
TriangleMesh sloped_block(double x0, double x1, double y0, double y1, double h0, double h1);
// Asymmetric L-shaped relief: a sloped long arm and a flat short arm, thinnest along z.
TriangleMesh relief_slab();

TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b);
TriangleMesh reversed_faces(const TriangleMesh& mesh, const std::vector<std::size_t>& which);

// Minimal binary glTF container around a JSON document and a BIN chunk.
std::vector<std::uint8_t> make_glb(const nlohmann::json& document, const std::vector<std::uint8_t>& bin);
// Single-primitive GLB for a mesh, optionally under one node with a 4x4 column-major matrix.
std::vector<std::uint8_t> mesh_to_glb(const TriangleMesh& mesh, const std::vector<double>& node_matrix = {});

// Opaque disk of the given radius fraction centered in a size x size transparent frame.
ReferenceImage disk_reference(int size, double radius_fraction, std::uint8_t gray = 200);

// Scorer that calls one image (by exact PNG bytes) a perfect CLIP match and
// everything else a poor one. Records every image it is asked about.
class FavoringScorer final : public PerceptualScorer {
 public:
  explicit FavoringScorer(PngBytes favored) : favored_(std::move(favored)) {}
  std::vector<PngBytes> seen;

 protected:
  ModelIds do_handshake() override { return {"favoring", "favoring", nlohmann::json::object()}; }
  double do_clip_similarity(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) override;
  double do_lpips(std::span<const std::uint8_t>, std::span<const std::uint8_t>) override { return 0.0; }

 private:
  PngBytes favored_;
};

// On-disk dataset: each figure's reference is the relief slab rendered under
// a different candidate pose, and each method contributes one mesh per figure
// (Alpha: the relief, Beta: a sphere, Gamma: an open box, Delta: a torus, ...).
// Returns the manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const std::string& dataset_id,
                                              int figure_count, const std::vector<std::string>& methods,
                                              int resolution = 128);

// Target aggregate for one method of the metric-table fixture.
struct TableTarget {
  std::string method;
  double iou, lpips, clip, depth;
  int watertight;  // out of 38 figures
};
// Seven-method, 38-figure dataset "monteprandone" whose aggregate rows are
// the targets below, built from spread-out per-figure records.
const std::vector<TableTarget>& table_targets();
Report table_fixture_report();

// Kendall's W evaluated directly from a rank matrix (rows are raters) with
// the expanded form 12*sum(R^2) - 3 m^2 n (n+1)^2 over m^2 (n^3 - n) - m * sum(t^3 - t).
// Written without the library so it can serve as an oracle.
double direct_kendall_w(const std::vector<std::vector<double>>& ranks);
// Average ranks (1 = largest) by counting strictly larger and equal values.
std::vector<double> direct_ranks(const std::vector<double>& scores);

// A loopback TCP port that was free a moment ago.
int free_tcp_port();

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace minia::fixtures
