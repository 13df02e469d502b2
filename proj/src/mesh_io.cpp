#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include <Eigen/Geometry>
#include <fmt/format.h>
#include <json.hpp>

#include "minia/error.hpp"
#include "minia/mesh.hpp"

namespace minia {
namespace {

using json = nlohmann::json;

struct Token {
  std::string_view text;
  std::size_t offset;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<Token> split_tokens(std::string_view line, std::size_t base) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) out.push_back({line.substr(start, i - start), base + start});
  }
  return out;
}

double parse_double(const Token& tok) {
  double value = 0.0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::MalformedFile, fmt::format("bad number '{}'", tok.text), tok.offset);
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::MalformedFile, "non-finite coordinate", tok.offset);
  }
  return value;
}

long long parse_integer(std::string_view text, std::size_t offset) {
  long long value = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::MalformedFile, fmt::format("bad index '{}'", text), offset);
  }
  return value;
}

// Polygon -> triangle fan, with per-face byte offsets kept for range errors.
struct PolygonSink {
  std::vector<Face> faces;
  std::vector<std::size_t> offsets;

  void add_polygon(const std::vector<long long>& idx, std::size_t offset) {
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
      faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[k]),
                       static_cast<std::uint32_t>(idx[k + 1])});
      offsets.push_back(offset);
    }
  }
};

void check_indices(const std::vector<Vec3>& vertices, const std::vector<std::vector<long long>>& polys,
                   const std::vector<std::size_t>& offsets) {
  const auto n = static_cast<long long>(vertices.size());
  for (std::size_t p = 0; p < polys.size(); ++p) {
    for (auto i : polys[p]) {
      if (i < 0 || i >= n || i > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::MalformedFile,
                    fmt::format("face index {} out of range ({} vertices)", i, n), offsets[p]);
      }
    }
  }
}

TriangleMesh finish(std::vector<Vec3> vertices, const std::vector<std::vector<long long>>& polys,
                    const std::vector<std::size_t>& offsets, SourceFormat format) {
  check_indices(vertices, polys, offsets);
  PolygonSink sink;
  for (std::size_t p = 0; p < polys.size(); ++p) sink.add_polygon(polys[p], offsets[p]);
  TriangleMesh mesh = make_mesh(std::move(vertices), std::move(sink.faces));
  mesh.source_format = format;
  return mesh;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> ply_type_from_name(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  return std::nullopt;
}

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 1;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

template <typename T>
T load_le(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    std::reverse(bytes, bytes + sizeof(T));
  }
  return value;
}

class PlyBinaryReader {
 public:
  PlyBinaryReader(std::string_view data, std::size_t pos) : data_(data), pos_(pos) {}

  double read(PlyType t) {
    const auto size = ply_type_size(t);
    if (pos_ + size > data_.size()) {
      throw Error(ErrorCode::MalformedFile, "unexpected end of binary PLY body", pos_);
    }
    const char* p = data_.data() + pos_;
    pos_ += size;
    switch (t) {
      case PlyType::i8: return load_le<std::int8_t>(p);
      case PlyType::u8: return load_le<std::uint8_t>(p);
      case PlyType::i16: return load_le<std::int16_t>(p);
      case PlyType::u16: return load_le<std::uint16_t>(p);
      case PlyType::i32: return load_le<std::int32_t>(p);
      case PlyType::u32: return load_le<std::uint32_t>(p);
      case PlyType::f32: return load_le<float>(p);
      case PlyType::f64: return load_le<double>(p);
    }
    return 0.0;
  }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_;
};

class PlyAsciiReader {
 public:
  PlyAsciiReader(std::string_view data, std::size_t pos) : data_(data), pos_(pos) {}

  double read(PlyType) {
    while (pos_ < data_.size() && (is_space(data_[pos_]) || data_[pos_] == '\n')) ++pos_;
    if (pos_ >= data_.size()) {
      throw Error(ErrorCode::MalformedFile, "unexpected end of ASCII PLY body", pos_);
    }
    std::size_t start = pos_;
    while (pos_ < data_.size() && !is_space(data_[pos_]) && data_[pos_] != '\n') ++pos_;
    Token tok{data_.substr(start, pos_ - start), start};
    last_offset_ = start;
    double value = 0.0;
    const char* first = tok.text.data();
    const char* last = first + tok.text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      throw Error(ErrorCode::MalformedFile, fmt::format("bad PLY value '{}'", tok.text), start);
    }
    return value;
  }
  std::size_t offset() const { return last_offset_; }

 private:
  std::string_view data_;
  std::size_t pos_;
  std::size_t last_offset_ = 0;
};

template <typename Reader>
TriangleMesh read_ply_body(Reader& reader, const std::vector<PlyElement>& elements) {
  std::vector<Vec3> vertices;
  std::vector<std::vector<long long>> polys;
  std::vector<std::size_t> offsets;
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix = -1, iy = -1, iz = -1, ilist = -1;
    for (int p = 0; p < static_cast<int>(el.properties.size()); ++p) {
      const auto& prop = el.properties[p];
      if (is_vertex && !prop.is_list) {
        if (prop.name == "x") ix = p;
        if (prop.name == "y") iy = p;
        if (prop.name == "z") iz = p;
      }
      if (is_face && prop.is_list && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
        ilist = p;
      }
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) {
      throw Error(ErrorCode::MalformedFile, "PLY vertex element lacks x/y/z", 0);
    }
    if (is_face && ilist < 0) {
      throw Error(ErrorCode::MalformedFile, "PLY face element lacks vertex_indices", 0);
    }
    if (is_vertex) vertices.reserve(el.count);
    if (is_face) polys.reserve(el.count);
    for (std::size_t row = 0; row < el.count; ++row) {
      Vec3 position = Vec3::Zero();
      std::vector<long long> poly;
      std::size_t row_offset = reader.offset();
      for (int p = 0; p < static_cast<int>(el.properties.size()); ++p) {
        const auto& prop = el.properties[p];
        if (prop.is_list) {
          const double count = reader.read(prop.count_type);
          if (count < 0 || count != std::floor(count)) {
            throw Error(ErrorCode::MalformedFile, "bad PLY list length", reader.offset());
          }
          if (p == ilist) row_offset = reader.offset();
          for (long long k = 0; k < static_cast<long long>(count); ++k) {
            const double v = reader.read(prop.type);
            if (p == ilist) poly.push_back(static_cast<long long>(v));
          }
        } else {
          const double v = reader.read(prop.type);
          if (p == ix) position.x() = v;
          if (p == iy) position.y() = v;
          if (p == iz) position.z() = v;
        }
      }
      if (is_vertex) {
        if (!position.allFinite()) {
          throw Error(ErrorCode::MalformedFile, "non-finite PLY vertex", reader.offset());
        }
        vertices.push_back(position);
      }
      if (is_face) {
        if (poly.size() < 3) {
          throw Error(ErrorCode::MalformedFile, "PLY face with fewer than 3 vertices", row_offset);
        }
        polys.push_back(std::move(poly));
        offsets.push_back(row_offset);
      }
    }
  }
  return finish(std::move(vertices), polys, offsets, SourceFormat::ply);
}

// ---------------------------------------------------------------------------
// GLB

constexpr std::uint32_t kGlbMagic = 0x46546C67;
constexpr std::uint32_t kChunkJson = 0x4E4F534A;
constexpr std::uint32_t kChunkBin = 0x004E4942;

using Affine = Eigen::Matrix4d;

Affine node_local_matrix(const json& node) {
  Affine m = Affine::Identity();
  if (node.contains("matrix")) {
    const auto& a = node.at("matrix");
    if (!a.is_array() || a.size() != 16) throw Error(ErrorCode::MalformedFile, "bad node matrix", 12);
    for (int c = 0; c < 4; ++c)
      for (int r = 0; r < 4; ++r) m(r, c) = a[c * 4 + r].get<double>();
    return m;
  }
  Affine t = Affine::Identity(), r = Affine::Identity(), s = Affine::Identity();
  if (node.contains("translation")) {
    const auto& a = node.at("translation");
    for (int i = 0; i < 3; ++i) t(i, 3) = a.at(i).get<double>();
  }
  if (node.contains("rotation")) {
    const auto& a = node.at("rotation");
    Eigen::Quaterniond q(a.at(3).get<double>(), a.at(0).get<double>(), a.at(1).get<double>(),
                         a.at(2).get<double>());
    r.topLeftCorner<3, 3>() = q.normalized().toRotationMatrix();
  }
  if (node.contains("scale")) {
    const auto& a = node.at("scale");
    for (int i = 0; i < 3; ++i) s(i, i) = a.at(i).get<double>();
  }
  return t * r * s;
}

class GlbReader {
 public:
  GlbReader(const json& doc, std::string_view bin, std::size_t bin_offset)
      : doc_(doc), bin_(bin), bin_offset_(bin_offset) {}

  // Returns accessor elements flattened as doubles (count * components).
  std::vector<double> read_accessor(std::size_t index, int expect_components) const {
    const auto& accessors = doc_.at("accessors");
    if (index >= accessors.size()) throw Error(ErrorCode::MalformedFile, "accessor index out of range", 12);
    const auto& acc = accessors.at(index);
    const auto count = acc.at("count").get<std::size_t>();
    const auto component_type = acc.at("componentType").get<int>();
    const auto type = acc.at("type").get<std::string>();
    const int components = type == "SCALAR" ? 1 : type == "VEC2" ? 2 : type == "VEC3" ? 3 : type == "VEC4" ? 4 : 0;
    if (components != expect_components) {
      throw Error(ErrorCode::MalformedFile, fmt::format("accessor {} has type {}", index, type), 12);
    }
    std::size_t comp_size = 0;
    switch (component_type) {
      case 5120: case 5121: comp_size = 1; break;
      case 5122: case 5123: comp_size = 2; break;
      case 5125: case 5126: comp_size = 4; break;
      default: throw Error(ErrorCode::MalformedFile, fmt::format("componentType {}", component_type), 12);
    }
    std::vector<double> out(count * components, 0.0);
    if (!acc.contains("bufferView")) return out;  // all zeros per glTF
    const auto& view = doc_.at("bufferViews").at(acc.at("bufferView").get<std::size_t>());
    if (view.value("buffer", 0) != 0) {
      throw Error(ErrorCode::UnsupportedFormat, "GLB accessor refers to an external buffer");
    }
    const std::size_t view_offset = view.value("byteOffset", std::size_t{0});
    const std::size_t view_length = view.at("byteLength").get<std::size_t>();
    const std::size_t acc_offset = acc.value("byteOffset", std::size_t{0});
    const std::size_t elem_size = comp_size * components;
    const std::size_t stride = view.value("byteStride", elem_size);
    if (count > 0) {
      const std::size_t last = acc_offset + (count - 1) * stride + elem_size;
      if (last > view_length || view_offset + view_length > bin_.size()) {
        throw Error(ErrorCode::MalformedFile, fmt::format("accessor {} exceeds its buffer", index),
                    bin_offset_ + view_offset);
      }
    }
    const char* base = bin_.data() + view_offset + acc_offset;
    for (std::size_t i = 0; i < count; ++i) {
      for (int c = 0; c < components; ++c) {
        const char* p = base + i * stride + c * comp_size;
        double v = 0.0;
        switch (component_type) {
          case 5120: v = load_le<std::int8_t>(p); break;
          case 5121: v = load_le<std::uint8_t>(p); break;
          case 5122: v = load_le<std::int16_t>(p); break;
          case 5123: v = load_le<std::uint16_t>(p); break;
          case 5125: v = load_le<std::uint32_t>(p); break;
          case 5126: v = load_le<float>(p); break;
        }
        out[i * components + c] = v;
      }
    }
    return out;
  }

  void append_mesh(std::size_t mesh_index, const Affine& world, std::vector<Vec3>& vertices,
                   std::vector<std::vector<long long>>& polys, std::vector<std::size_t>& offsets) const {
    const auto& mesh = doc_.at("meshes").at(mesh_index);
    for (const auto& prim : mesh.at("primitives")) {
      const int mode = prim.value("mode", 4);
      if (mode < 4 || mode > 6) continue;  // points and lines carry no surface
      const auto& attrs = prim.at("attributes");
      if (!attrs.contains("POSITION")) continue;
      const auto positions = read_accessor(attrs.at("POSITION").get<std::size_t>(), 3);
      const std::size_t base = vertices.size();
      const std::size_t nverts = positions.size() / 3;
      for (std::size_t i = 0; i < nverts; ++i) {
        Eigen::Vector4d p(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2], 1.0);
        Eigen::Vector4d q = world * p;
        vertices.emplace_back(q.x(), q.y(), q.z());
      }
      std::vector<long long> idx;
      if (prim.contains("indices")) {
        for (double v : read_accessor(prim.at("indices").get<std::size_t>(), 1)) {
          idx.push_back(static_cast<long long>(v));
        }
      } else {
        for (std::size_t i = 0; i < nverts; ++i) idx.push_back(static_cast<long long>(i));
      }
      for (auto& i : idx) {
        if (i < 0 || static_cast<std::size_t>(i) >= nverts) {
          throw Error(ErrorCode::MalformedFile,
                      fmt::format("index {} out of range in mesh {}", i, mesh_index), bin_offset_);
        }
        i += static_cast<long long>(base);
      }
      auto tri = [&](long long a, long long b, long long c) {
        polys.push_back({a, b, c});
        offsets.push_back(bin_offset_);
      };
      if (mode == 4) {
        for (std::size_t k = 0; k + 2 < idx.size(); k += 3) tri(idx[k], idx[k + 1], idx[k + 2]);
      } else if (mode == 5) {
        for (std::size_t k = 0; k + 2 < idx.size(); ++k) {
          if (k % 2 == 0) tri(idx[k], idx[k + 1], idx[k + 2]);
          else tri(idx[k + 1], idx[k], idx[k + 2]);
        }
      } else {
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) tri(idx[0], idx[k], idx[k + 1]);
      }
    }
  }

  void visit_node(std::size_t node_index, const Affine& parent, int depth, std::vector<Vec3>& vertices,
                  std::vector<std::vector<long long>>& polys, std::vector<std::size_t>& offsets) const {
    if (depth > 64) throw Error(ErrorCode::MalformedFile, "node hierarchy too deep or cyclic", 12);
    const auto& node = doc_.at("nodes").at(node_index);
    const Affine world = parent * node_local_matrix(node);
    if (node.contains("mesh")) append_mesh(node.at("mesh").get<std::size_t>(), world, vertices, polys, offsets);
    if (node.contains("children")) {
      for (const auto& child : node.at("children")) {
        visit_node(child.get<std::size_t>(), world, depth + 1, vertices, polys, offsets);
      }
    }
  }

 private:
  const json& doc_;
  std::string_view bin_;
  std::size_t bin_offset_;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

TriangleMesh parse_obj(std::string_view text) {
  std::vector<Vec3> vertices;
  std::vector<std::vector<long long>> polys;
  std::vector<std::size_t> offsets;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split_tokens(line, pos);
    if (!tokens.empty()) {
      const auto& key = tokens[0].text;
      if (key == "v") {
        if (tokens.size() < 4) throw Error(ErrorCode::MalformedFile, "vertex needs 3 coordinates", pos);
        vertices.emplace_back(parse_double(tokens[1]), parse_double(tokens[2]), parse_double(tokens[3]));
      } else if (key == "f") {
        if (tokens.size() < 4) throw Error(ErrorCode::MalformedFile, "face needs at least 3 vertices", pos);
        std::vector<long long> poly;
        for (std::size_t t = 1; t < tokens.size(); ++t) {
          auto ref = tokens[t].text;
          ref = ref.substr(0, ref.find('/'));
          long long i = parse_integer(ref, tokens[t].offset);
          if (i == 0) throw Error(ErrorCode::MalformedFile, "OBJ index 0 is invalid", tokens[t].offset);
          i = i > 0 ? i - 1 : static_cast<long long>(vertices.size()) + i;
          poly.push_back(i);
        }
        polys.push_back(std::move(poly));
        offsets.push_back(pos);
      }
      // vt, vn, g, o, s, usemtl, mtllib, l, p: ignored
    }
    pos = end + 1;
  }
  return finish(std::move(vertices), polys, offsets, SourceFormat::obj);
}

TriangleMesh parse_ply(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::pair<std::string_view, std::size_t> {
    if (pos >= bytes.size()) throw Error(ErrorCode::MalformedFile, "PLY header not terminated", pos);
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) throw Error(ErrorCode::MalformedFile, "PLY header not terminated", pos);
    std::string_view line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t at = pos;
    pos = end + 1;
    return {line, at};
  };
  if (next_line().first != "ply") throw Error(ErrorCode::MalformedFile, "missing 'ply' magic", 0);
  enum class Encoding { ascii, binary_le } encoding = Encoding::ascii;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    auto [line, at] = next_line();
    const auto tokens = split_tokens(line, at);
    if (tokens.empty()) continue;
    const auto key = tokens[0].text;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      if (tokens.size() < 2) throw Error(ErrorCode::MalformedFile, "bad format line", at);
      if (tokens[1].text == "ascii") encoding = Encoding::ascii;
      else if (tokens[1].text == "binary_little_endian") encoding = Encoding::binary_le;
      else throw Error(ErrorCode::UnsupportedFormat, fmt::format("PLY encoding {}", tokens[1].text));
      have_format = true;
    } else if (key == "element") {
      if (tokens.size() < 3) throw Error(ErrorCode::MalformedFile, "bad element line", at);
      const long long count = parse_integer(tokens[2].text, tokens[2].offset);
      if (count < 0) throw Error(ErrorCode::MalformedFile, "negative element count", tokens[2].offset);
      elements.push_back({std::string(tokens[1].text), static_cast<std::size_t>(count), {}});
    } else if (key == "property") {
      if (elements.empty()) throw Error(ErrorCode::MalformedFile, "property before element", at);
      PlyProperty prop;
      if (tokens.size() >= 5 && tokens[1].text == "list") {
        auto ct = ply_type_from_name(tokens[2].text);
        auto it = ply_type_from_name(tokens[3].text);
        if (!ct || !it) throw Error(ErrorCode::MalformedFile, "unknown PLY list type", at);
        prop = {std::string(tokens[4].text), *it, true, *ct};
      } else if (tokens.size() >= 3) {
        auto t = ply_type_from_name(tokens[1].text);
        if (!t) throw Error(ErrorCode::MalformedFile, fmt::format("unknown PLY type {}", tokens[1].text), at);
        prop = {std::string(tokens[2].text), *t, false, PlyType::u8};
      } else {
        throw Error(ErrorCode::MalformedFile, "bad property line", at);
      }
      elements.back().properties.push_back(std::move(prop));
    } else {
      throw Error(ErrorCode::MalformedFile, fmt::format("unknown PLY header keyword {}", key), at);
    }
  }
  if (!have_format) throw Error(ErrorCode::MalformedFile, "PLY header lacks format", 0);
  if (encoding == Encoding::ascii) {
    PlyAsciiReader reader(bytes, pos);
    return read_ply_body(reader, elements);
  }
  PlyBinaryReader reader(bytes, pos);
  return read_ply_body(reader, elements);
}

TriangleMesh parse_glb(std::string_view bytes) {
  if (bytes.size() < 20) throw Error(ErrorCode::MalformedFile, "GLB shorter than its header", 0);
  const char* p = bytes.data();
  if (load_le<std::uint32_t>(p) != kGlbMagic) throw Error(ErrorCode::MalformedFile, "bad GLB magic", 0);
  if (load_le<std::uint32_t>(p + 4) != 2) throw Error(ErrorCode::UnsupportedFormat, "only glTF 2.0 GLB is supported");
  const std::size_t total = load_le<std::uint32_t>(p + 8);
  if (total > bytes.size()) throw Error(ErrorCode::MalformedFile, "GLB length exceeds file size", 8);
  std::size_t pos = 12;
  std::string_view json_chunk, bin_chunk;
  std::size_t bin_offset = 0;
  while (pos + 8 <= total) {
    const std::size_t len = load_le<std::uint32_t>(p + pos);
    const std::uint32_t type = load_le<std::uint32_t>(p + pos + 4);
    if (pos + 8 + len > total) throw Error(ErrorCode::MalformedFile, "GLB chunk exceeds file", pos);
    const auto data = bytes.substr(pos + 8, len);
    if (type == kChunkJson && json_chunk.empty()) json_chunk = data;
    else if (type == kChunkBin && bin_chunk.empty()) {
      bin_chunk = data;
      bin_offset = pos + 8;
    }
    pos += 8 + len;
  }
  if (json_chunk.empty()) throw Error(ErrorCode::MalformedFile, "GLB lacks a JSON chunk", 12);
  json doc = json::parse(json_chunk, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::MalformedFile, "GLB JSON chunk does not parse", 20);

  std::vector<Vec3> vertices;
  std::vector<std::vector<long long>> polys;
  std::vector<std::size_t> offsets;
  try {
    GlbReader reader(doc, bin_chunk, bin_offset);
    std::vector<std::size_t> roots;
    if (doc.contains("scenes") && !doc.at("scenes").empty()) {
      const auto& scene = doc.at("scenes").at(doc.value("scene", std::size_t{0}));
      for (const auto& n : scene.value("nodes", json::array())) roots.push_back(n.get<std::size_t>());
    } else if (doc.contains("nodes")) {
      std::vector<bool> is_child(doc.at("nodes").size(), false);
      for (const auto& node : doc.at("nodes")) {
        for (const auto& c : node.value("children", json::array())) is_child.at(c.get<std::size_t>()) = true;
      }
      for (std::size_t i = 0; i < is_child.size(); ++i)
        if (!is_child[i]) roots.push_back(i);
    }
    if (!roots.empty()) {
      for (auto r : roots) reader.visit_node(r, Affine::Identity(), 0, vertices, polys, offsets);
    } else if (doc.contains("meshes")) {
      for (std::size_t m = 0; m < doc.at("meshes").size(); ++m) {
        reader.append_mesh(m, Affine::Identity(), vertices, polys, offsets);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("GLB JSON structure: ") + e.what(), 20);
  }
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw Error(ErrorCode::MalformedFile, "non-finite GLB position", bin_offset);
  }
  return finish(std::move(vertices), polys, offsets, SourceFormat::glb);
}

TriangleMesh load_mesh(const std::filesystem::path& path, std::string method_id, std::string figure_id) {
  const std::string ext = lower_extension(path);
  const std::string data = read_file(path);
  TriangleMesh mesh;
  auto starts_with = [&](std::string_view magic) { return std::string_view(data).substr(0, magic.size()) == magic; };
  if (ext == ".obj") {
    mesh = parse_obj(data);
  } else if (ext == ".ply" || (ext != ".glb" && starts_with("ply"))) {
    mesh = parse_ply(data);
  } else if (ext == ".glb" || starts_with("glTF")) {
    mesh = parse_glb(data);
  } else {
    throw Error(ErrorCode::UnsupportedFormat, "unrecognised mesh format: " + path.string());
  }
  mesh.method_id = std::move(method_id);
  mesh.figure_id = std::move(figure_id);
  return mesh;
}

}  // namespace minia
