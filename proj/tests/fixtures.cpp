#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

namespace minia::fixtures {

namespace {

// Flips any face whose normal points toward `inside`; valid for convex solids.
TriangleMesh orient_outward(std::vector<Vec3> vertices, std::vector<Face> faces, const Vec3& inside) {
  for (auto& f : faces) {
    const Vec3& a = vertices[f[0]];
    const Vec3 n = (vertices[f[1]] - a).cross(vertices[f[2]] - a);
    const Vec3 centroid = (a + vertices[f[1]] + vertices[f[2]]) / 3.0;
    if (n.dot(centroid - inside) < 0.0) std::swap(f[1], f[2]);
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

std::vector<Face> hexahedron_faces() {
  // corner index = x + 2y + 4z
  const int quads[6][4] = {{0, 1, 3, 2}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 3, 7, 5}};
  std::vector<Face> faces;
  for (const auto& q : quads) {
    faces.push_back({std::uint32_t(q[0]), std::uint32_t(q[1]), std::uint32_t(q[2])});
    faces.push_back({std::uint32_t(q[0]), std::uint32_t(q[2]), std::uint32_t(q[3])});
  }
  return faces;
}

}  // namespace

TriangleMesh tetrahedron(const Vec3& offset) {
  std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (auto& p : v) p += offset;
  return orient_outward(v, {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}}, offset + Vec3(0.25, 0.25, 0.25));
}

TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  return orient_outward(v, hexahedron_faces(), (lo + hi) / 2.0);
}

TriangleMesh cube(const Vec3& scale) { return box(Vec3::Zero(), scale); }

TriangleMesh icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back(((v[a] + v[b]) / 2.0).normalized());
      const auto idx = static_cast<std::uint32_t>(v.size() - 1);
      mid.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    for (const auto& face : f) {
      const auto ab = midpoint(face[0], face[1]);
      const auto bc = midpoint(face[1], face[2]);
      const auto ca = midpoint(face[2], face[0]);
      next.push_back({face[0], ab, ca});
      next.push_back({face[1], bc, ab});
      next.push_back({face[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return orient_outward(v, f, Vec3::Zero());
}

TriangleMesh torus(int major_segments, int minor_segments, double major_radius, double minor_radius) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  const double tau = 2.0 * std::numbers::pi;
  for (int i = 0; i < major_segments; ++i) {
    const double u = tau * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      const double w = tau * j / minor_segments;
      const double ring = major_radius + minor_radius * std::cos(w);
      v.emplace_back(ring * std::cos(u), ring * std::sin(u), minor_radius * std::sin(w));
    }
  }
  auto id = [&](int i, int j) {
    return static_cast<std::uint32_t>((i % major_segments) * minor_segments + (j % minor_segments));
  };
  for (int i = 0; i < major_segments; ++i)
    for (int j = 0; j < minor_segments; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh open_box() {
  TriangleMesh c = cube();
  std::vector<Face> kept;
  for (const auto& face : c.faces) {
    const bool top = c.vertices[face[0]].z() == 1.0 && c.vertices[face[1]].z() == 1.0 && c.vertices[face[2]].z() == 1.0;
    if (!top) kept.push_back(face);
  }
  return make_mesh(c.vertices, kept);
}

TriangleMesh fin() {
  return make_mesh({{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {0.5, -1, 0}, {0.5, 0, 1}}, {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}});
}

TriangleMesh cube_with_fin() {
  TriangleMesh c = cube();
  auto v = c.vertices;
  auto f = c.faces;
  v.emplace_back(0.5, -1.0, -1.0);
  // edge (0,0,0)-(1,0,0) is corners 0 and 1
  f.push_back({0, 1, static_cast<std::uint32_t>(v.size() - 1)});
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh mixed_winding_sphere() { return reversed_faces(icosphere(1), {7}); }

TriangleMesh disjoint_tetrahedra() { return merge(tetrahedron(), tetrahedron(Vec3(3, 0, 0))); }

TriangleMesh disk(int segments, double radius) {
  std::vector<Vec3> v{Vec3::Zero()};
  std::vector<Face> f;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
  }
  for (int i = 0; i < segments; ++i) {
    f.push_back({0, static_cast<std::uint32_t>(1 + i), static_cast<std::uint32_t>(1 + (i + 1) % segments)});
  }
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh single_triangle() { return make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}); }

TriangleMesh unit_square() { return make_mesh({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 3}}); }

TriangleMesh mobius_strip(int segments) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int i = 0; i < segments; ++i) {
    const double u = 2.0 * std::numbers::pi * i / segments;
    for (double s : {-0.25, 0.25}) {
      const double r = 1.0 + s * std::cos(u / 2.0);
      v.emplace_back(r * std::cos(u), r * std::sin(u), s * std::sin(u / 2.0));
    }
  }
  auto top = [&](int i) { return static_cast<std::uint32_t>(2 * i); };
  auto bottom = [&](int i) { return static_cast<std::uint32_t>(2 * i + 1); };
  for (int i = 0; i + 1 < segments; ++i) {
    f.push_back({top(i), bottom(i), bottom(i + 1)});
    f.push_back({top(i), bottom(i + 1), top(i + 1)});
  }
  // the half twist joins the last rung to the first with sides exchanged
  const int last = segments - 1;
  f.push_back({top(last), bottom(last), top(0)});
  f.push_back({top(last), top(0), bottom(0)});
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh unwelded(const TriangleMesh& mesh) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (const auto& face : mesh.faces) {
    const auto base = static_cast<std::uint32_t>(v.size());
    for (auto idx : face) v.push_back(mesh.vertices[idx]);
    f.push_back({base, base + 1, base + 2});
  }
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh sloped_block(double x0, double x1, double y0, double y1, double h0, double h1) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    const bool hx = i & 1;
    v.emplace_back(hx ? x1 : x0, (i & 2) ? y1 : y0, (i & 4) ? (hx ? h1 : h0) : 0.0);
  }
  const Vec3 inside((x0 + x1) / 2, (y0 + y1) / 2, std::min(h0, h1) / 2);
  return orient_outward(v, hexahedron_faces(), inside);
}

TriangleMesh relief_slab() {
  return merge(sloped_block(0.0, 1.0, 0.0, 0.25, 0.02, 0.12), sloped_block(0.0, 0.25, 0.25, 0.6, 0.06, 0.06));
}

TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b) {
  auto v = a.vertices;
  auto f = a.faces;
  const auto base = static_cast<std::uint32_t>(v.size());
  v.insert(v.end(), b.vertices.begin(), b.vertices.end());
  for (auto face : b.faces) f.push_back({face[0] + base, face[1] + base, face[2] + base});
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh reversed_faces(const TriangleMesh& mesh, const std::vector<std::size_t>& which) {
  auto f = mesh.faces;
  for (auto i : which) std::swap(f.at(i)[1], f.at(i)[2]);
  return make_mesh(mesh.vertices, std::move(f));
}

std::vector<std::uint8_t> make_glb(const nlohmann::json& document, const std::vector<std::uint8_t>& bin) {
  std::string text = document.dump();
  while (text.size() % 4) text += ' ';
  std::vector<std::uint8_t> payload = bin;
  while (payload.size() % 4) payload.push_back(0);

  std::vector<std::uint8_t> out;
  auto u32 = [&](std::uint32_t x) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(x >> (8 * k)));
  };
  const std::uint32_t total = 12 + 8 + static_cast<std::uint32_t>(text.size()) +
                              (payload.empty() ? 0 : 8 + static_cast<std::uint32_t>(payload.size()));
  u32(0x46546C67);
  u32(2);
  u32(total);
  u32(static_cast<std::uint32_t>(text.size()));
  u32(0x4E4F534A);
  out.insert(out.end(), text.begin(), text.end());
  if (!payload.empty()) {
    u32(static_cast<std::uint32_t>(payload.size()));
    u32(0x004E4942);
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

std::vector<std::uint8_t> mesh_to_glb(const TriangleMesh& mesh, const std::vector<double>& node_matrix) {
  std::vector<std::uint8_t> bin;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bin.insert(bin.end(), b, b + n);
  };
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const auto& p : mesh.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    for (int k = 0; k < 3; ++k) {
      const float x = static_cast<float>(p[k]);
      put(&x, 4);
    }
  }
  const std::size_t pos_bytes = bin.size();
  for (const auto& f : mesh.faces) put(f.data(), 12);
  const std::size_t idx_bytes = bin.size() - pos_bytes;

  nlohmann::json node{{"mesh", 0}};
  if (!node_matrix.empty()) node["matrix"] = node_matrix;
  nlohmann::json doc{
      {"asset", {{"version", "2.0"}}},
      {"scene", 0},
      {"scenes", {{{"nodes", {0}}}}},
      {"nodes", {node}},
      {"meshes", {{{"primitives", {{{"attributes", {{"POSITION", 0}}}, {"indices", 1}, {"mode", 4}}}}}}},
      {"buffers", {{{"byteLength", bin.size()}}}},
      {"bufferViews",
       {{{"buffer", 0}, {"byteOffset", 0}, {"byteLength", pos_bytes}},
        {{"buffer", 0}, {"byteOffset", pos_bytes}, {"byteLength", idx_bytes}}}},
      {"accessors",
       {{{"bufferView", 0},
         {"componentType", 5126},
         {"count", mesh.vertices.size()},
         {"type", "VEC3"},
         {"min", {lo.x(), lo.y(), lo.z()}},
         {"max", {hi.x(), hi.y(), hi.z()}}},
        {{"bufferView", 1}, {"componentType", 5125}, {"count", mesh.faces.size() * 3}, {"type", "SCALAR"}}}}};
  return make_glb(doc, bin);
}

ReferenceImage disk_reference(int size, double radius_fraction, std::uint8_t gray) {
  ReferenceImage ref;
  ref.rgba = RgbaImage(size, size, 0);
  const double c = size / 2.0;
  const double r = radius_fraction * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - c;
      const double dy = y + 0.5 - c;
      if (dx * dx + dy * dy <= r * r) {
        auto* p = ref.rgba.pixel(x, y);
        p[0] = p[1] = p[2] = gray;
        p[3] = 255;
      }
    }
  return ref;
}

double FavoringScorer::do_clip_similarity(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  seen.emplace_back(a.begin(), a.end());
  const auto is_favored = [&](std::span<const std::uint8_t> x) {
    return std::equal(x.begin(), x.end(), favored_.begin(), favored_.end());
  };
  return is_favored(a) || is_favored(b) ? 1.0 : -0.5;
}

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const std::string& dataset_id,
                                              int figure_count, const std::vector<std::string>& methods,
                                              int resolution) {
  std::filesystem::create_directories(dir);
  RenderConfig cfg;
  cfg.resolution = resolution;
  const TriangleMesh shapes[] = {relief_slab(), icosphere(2), open_box(), torus(16, 8), cube(Vec3(1, 0.6, 0.1))};
  nlohmann::json manifest = {{"dataset_id", dataset_id},
                             {"render_config", {{"resolution", resolution}}},
                             {"figures", nlohmann::json::array()}};
  for (int f = 0; f < figure_count; ++f) {
    const std::string fig = dataset_id + "_" + std::to_string(f);
    const auto pose = OrientationCandidate::make(Axis::z, (5 * f + 3) % 16);
    const auto ref = reference_from_render(render(relief_slab(), pose, cfg));
    write_file(dir / (fig + ".png"), encode_png(ref.rgba));
    nlohmann::json meshes = nlohmann::json::object();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      // vary the pose per figure so orientation search has work to do
      const auto posed = apply_transform(shapes[m % std::size(shapes)],
                                         OrientationCandidate::make(Axis::z, (f + int(m)) % 16).as_transform);
      const std::string name = fig + "_" + methods[m] + ".obj";
      save_obj(posed, dir / name);
      meshes[methods[m]] = name;
    }
    manifest["figures"].push_back({{"figure_id", fig}, {"reference_path", fig + ".png"}, {"meshes", meshes}});
  }
  const auto path = dir / "manifest.json";
  write_text(path, manifest.dump(2));
  return path;
}

const std::vector<TableTarget>& table_targets() {
  static const std::vector<TableTarget> targets = {
      {"TripoSR", 0.459, 0.547, 0.721, 0.371, 0},  {"SF3D", 0.751, 0.395, 0.724, 0.234, 0},
      {"SPAR3D", 0.734, 0.399, 0.725, 0.262, 0},   {"TRELLIS", 0.572, 0.457, 0.716, 0.041, 15},
      {"Wonder3D", 0.348, 0.522, 0.677, 0.513, 6}, {"SAM3D", 0.594, 0.437, 0.730, 0.048, 26},
      {"Hi3DGen", 0.557, 0.431, 0.744, 0.190, 20},
  };
  return targets;
}

Report table_fixture_report() {
  Report report;
  report.metadata = {{"tool_version", kToolVersion}, {"dataset_id", "monteprandone"}, {"aggregation", "arithmetic_mean"}};
  for (int f = 0; f < 38; ++f) {
    for (const auto& t : table_targets()) {
      // symmetric offsets in pairs keep the mean on target
      const double spread = 0.01 * ((f / 2) % 5 + 1) * (f % 2 == 0 ? 1 : -1);
      MetricRecord r;
      r.figure_id = "fig" + std::to_string(f);
      r.method_id = t.method;
      r.silhouette_iou = t.iou + spread;
      r.lpips = t.lpips - spread;
      r.clip_score = t.clip + spread / 2;
      r.depth_range_ratio = t.depth + spread / 4;
      r.is_watertight = f < t.watertight;
      report.records.push_back(r);
    }
  }
  report.aggregates = aggregate(report.records, "monteprandone");
  return report;
}

double direct_kendall_w(const std::vector<std::vector<double>>& ranks) {
  const double m = static_cast<double>(ranks.size());
  const double n = static_cast<double>(ranks[0].size());
  std::vector<double> col(ranks[0].size(), 0.0);
  double ties = 0.0;
  for (const auto& row : ranks) {
    std::vector<double> sorted = row;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      ties += t * t * t - t;
      i = j;
    }
    for (std::size_t j = 0; j < row.size(); ++j) col[j] += row[j];
  }
  double sum_sq = 0.0;
  for (double r : col) sum_sq += r * r;
  const double numerator = 12.0 * sum_sq - 3.0 * m * m * n * (n + 1) * (n + 1);
  const double denominator = m * m * (n * n * n - n) - m * ties;
  if (denominator <= 0) return 0.0;
  return numerator / denominator;
}

std::vector<double> direct_ranks(const std::vector<double>& scores) {
  std::vector<double> out;
  for (double s : scores) {
    double larger = 0, equal = 0;
    for (double t : scores) {
      larger += t > s ? 1 : 0;
      equal += t == s ? 1 : 0;
    }
    out.push_back(larger + (equal + 1) / 2.0);
  }
  return out;
}

int free_tcp_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  socklen_t len = sizeof addr;
  const bool ok = ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0 &&
                  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0;
  ::close(fd);
  if (!ok) throw std::runtime_error("could not find a free port");
  return ntohs(addr.sin_port);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TempDir::TempDir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "minia-test-XXXXXX").string();
  if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace minia::fixtures
