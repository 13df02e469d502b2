#include "minia/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "minia/error.hpp"

namespace minia {
namespace {

// 8 bits of sub-pixel precision: vertices snap to 1/256 pixel and every
// coverage decision is made with exact integer edge functions.
constexpr int kSubpixelBits = 8;
constexpr long long kSubpixel = 1LL << kSubpixelBits;
constexpr long long kHalfPixel = kSubpixel / 2;

struct ScreenVertex {
  long long x, y;  // fixed point
  double depth;
};

long long floor_div(long long a, long long b) {
  long long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

long long ceil_div(long long a, long long b) { return -floor_div(-a, b); }

long long edge_function(const ScreenVertex& a, const ScreenVertex& b, long long px, long long py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// On-edge samples belong to the triangle whose inward normal points down
// (+y, screen space) or, for vertical edges, right.
bool owns_edge(const ScreenVertex& a, const ScreenVertex& b) {
  const long long dx = b.x - a.x;
  const long long dy = b.y - a.y;
  return dx > 0 || (dx == 0 && dy < 0);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

}  // namespace

void RenderConfig::validate() const {
  if (resolution < 16) throw Error(ErrorCode::InvalidArgument, fmt::format("resolution {} < 16", resolution));
  if (!(margin_fraction >= 0.0 && margin_fraction < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("margin_fraction {} outside [0, 0.5)", margin_fraction));
  }
  if (!(ambient >= 0.0 && ambient <= 1.0)) throw Error(ErrorCode::InvalidArgument, "ambient outside [0, 1]");
  if (!(albedo >= 0.0 && albedo <= 1.0)) throw Error(ErrorCode::InvalidArgument, "albedo outside [0, 1]");
  if (!light_direction.allFinite() || light_direction.norm() == 0.0) {
    throw Error(ErrorCode::InvalidArgument, "light_direction must be a non-zero finite vector");
  }
}

RenderOutput render(const TriangleMesh& mesh, const OrientationCandidate& view, const RenderConfig& config) {
  return render_view(mesh, view.as_transform, config);
}

RenderOutput render_view(const TriangleMesh& mesh, const RigidTransform& to_camera, const RenderConfig& config) {
  config.validate();
  if (mesh.faces.empty() || mesh.vertices.empty()) throw Error(ErrorCode::EmptyMesh, "render of an empty mesh");

  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = to_camera.linear * mesh.vertices[i];
  Vec3 lo = cam[0], hi = cam[0];
  for (const auto& p : cam) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double in_plane = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  if (!(in_plane > 0.0)) throw Error(ErrorCode::DegenerateProjection, "in-plane extents are both zero");

  const int res = config.resolution;
  const double scale = (1.0 - 2.0 * config.margin_fraction) * res / in_plane;
  const double cx = 0.5 * (lo.x() + hi.x());
  const double cy = 0.5 * (lo.y() + hi.y());
  const double half = 0.5 * res;

  std::vector<ScreenVertex> screen(cam.size());
  for (std::size_t i = 0; i < cam.size(); ++i) {
    const double sx = half + (cam[i].x() - cx) * scale;
    const double sy = half - (cam[i].y() - cy) * scale;
    screen[i] = {std::llround(sx * kSubpixel), std::llround(sy * kSubpixel), (hi.z() - cam[i].z()) * scale};
  }

  const Vec3 light = config.light_direction.normalized();
  const double diffuse = (1.0 - config.ambient) * config.albedo;

  RenderOutput out;
  out.shaded = RgbImage(res, res, config.background_gray);
  out.depth_mask = Mask(res, res, false);
  std::vector<double> zbuf(static_cast<std::size_t>(res) * res, std::numeric_limits<double>::infinity());

  for (const auto& face : mesh.faces) {
    ScreenVertex v0 = screen[face[0]], v1 = screen[face[1]], v2 = screen[face[2]];
    long long area = edge_function(v0, v1, v2.x, v2.y);
    if (area == 0) continue;
    if (area < 0) {
      std::swap(v1, v2);
      area = -area;
    }

    const Vec3 n = (cam[face[1]] - cam[face[0]]).cross(cam[face[2]] - cam[face[0]]);
    const double len = n.norm();
    const double cosine = len > 0.0 ? std::abs(n.dot(light)) / len : 0.0;
    const std::uint8_t gray = to_byte(255.0 * std::clamp(config.ambient + diffuse * cosine, 0.0, 1.0));

    const long long bias0 = owns_edge(v1, v2) ? 0 : 1;
    const long long bias1 = owns_edge(v2, v0) ? 0 : 1;
    const long long bias2 = owns_edge(v0, v1) ? 0 : 1;

    const long long min_x = std::min({v0.x, v1.x, v2.x}), max_x = std::max({v0.x, v1.x, v2.x});
    const long long min_y = std::min({v0.y, v1.y, v2.y}), max_y = std::max({v0.y, v1.y, v2.y});
    const int x_begin = static_cast<int>(std::max(0LL, ceil_div(min_x - kHalfPixel, kSubpixel)));
    const int x_end = static_cast<int>(std::min<long long>(res - 1, floor_div(max_x - kHalfPixel, kSubpixel)));
    const int y_begin = static_cast<int>(std::max(0LL, ceil_div(min_y - kHalfPixel, kSubpixel)));
    const int y_end = static_cast<int>(std::min<long long>(res - 1, floor_div(max_y - kHalfPixel, kSubpixel)));
    const double inv_area = 1.0 / static_cast<double>(area);

    for (int y = y_begin; y <= y_end; ++y) {
      const long long py = y * kSubpixel + kHalfPixel;
      for (int x = x_begin; x <= x_end; ++x) {
        const long long px = x * kSubpixel + kHalfPixel;
        const long long w0 = edge_function(v1, v2, px, py);
        const long long w1 = edge_function(v2, v0, px, py);
        const long long w2 = edge_function(v0, v1, px, py);
        if (w0 < bias0 || w1 < bias1 || w2 < bias2) continue;
        const double depth = (static_cast<double>(w0) * v0.depth + static_cast<double>(w1) * v1.depth +
                              static_cast<double>(w2) * v2.depth) * inv_area;
        const std::size_t idx = static_cast<std::size_t>(y) * res + x;
        if (depth < zbuf[idx]) {
          zbuf[idx] = depth;
          out.depth_mask.data[idx] = 1;
          std::uint8_t* p = out.shaded.pixel(x, y);
          p[0] = p[1] = p[2] = gray;
        }
      }
    }
  }

  out.depth_buffer = FloatImage(res, res, std::numeric_limits<float>::infinity());
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    if (out.depth_mask.data[i]) out.depth_buffer.data[i] = static_cast<float>(zbuf[i]);
  }
  return out;
}

RgbImage composite_on_gray(const ReferenceImage& reference, const RenderConfig& config) {
  const auto& src = reference.rgba;
  RgbImage out(src.width, src.height);
  const unsigned gray = config.background_gray;
  for (std::size_t i = 0, n = static_cast<std::size_t>(src.width) * src.height; i < n; ++i) {
    const unsigned a = src.data[4 * i + 3];
    for (int c = 0; c < 3; ++c) {
      // round((a * rgb + (255 - a) * gray) / 255), halves rounded up
      const unsigned num = a * src.data[4 * i + c] + (255 - a) * gray;
      out.data[3 * i + c] = static_cast<std::uint8_t>((2 * num + 255) / 510);
    }
  }
  return out;
}

Mask alpha_mask(const ReferenceImage& reference) {
  const auto& src = reference.rgba;
  Mask out(src.width, src.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = src.data[4 * i + 3] >= reference.alpha_threshold ? 1 : 0;
  }
  return out;
}

ReferenceImage fit_reference(const ReferenceImage& reference, const RenderConfig& config) {
  config.validate();
  const auto& src = reference.rgba;
  if (src.width < 1 || src.height < 1) throw Error(ErrorCode::InvalidArgument, "empty reference image");

  const Mask mask = alpha_mask(reference);
  int x0 = src.width, y0 = src.height, x1 = -1, y1 = -1;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) {
    x0 = 0;
    y0 = 0;
    x1 = src.width - 1;
    y1 = src.height - 1;
  }
  const double box_w = x1 - x0 + 1;
  const double box_h = y1 - y0 + 1;
  const int res = config.resolution;
  const double scale = (1.0 - 2.0 * config.margin_fraction) * res / std::max(box_w, box_h);
  const double mid_x = x0 + 0.5 * box_w;
  const double mid_y = y0 + 0.5 * box_h;

  ReferenceImage out;
  out.alpha_threshold = reference.alpha_threshold;
  out.rgba = RgbaImage(res, res, 0);
  auto texel = [&](int x, int y) {
    return src.pixel(std::clamp(x, x0, x1), std::clamp(y, y0, y1));
  };
  for (int j = 0; j < res; ++j) {
    const double v = mid_y + (j + 0.5 - 0.5 * res) / scale;
    if (v < y0 || v >= y1 + 1) continue;
    for (int i = 0; i < res; ++i) {
      const double u = mid_x + (i + 0.5 - 0.5 * res) / scale;
      if (u < x0 || u >= x1 + 1) continue;
      // bilinear on premultiplied colour
      const double fx = u - 0.5, fy = v - 0.5;
      const int ix = static_cast<int>(std::floor(fx)), iy = static_cast<int>(std::floor(fy));
      const double tx = fx - ix, ty = fy - iy;
      double acc[4] = {0, 0, 0, 0};
      const double weights[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
      const std::uint8_t* taps[4] = {texel(ix, iy), texel(ix + 1, iy), texel(ix, iy + 1), texel(ix + 1, iy + 1)};
      for (int k = 0; k < 4; ++k) {
        const double a = taps[k][3] / 255.0;
        for (int c = 0; c < 3; ++c) acc[c] += weights[k] * a * taps[k][c];
        acc[3] += weights[k] * a;
      }
      std::uint8_t* dst = out.rgba.pixel(i, j);
      if (acc[3] > 0.0) {
        for (int c = 0; c < 3; ++c) dst[c] = to_byte(acc[c] / acc[3]);
      }
      dst[3] = to_byte(255.0 * acc[3]);
    }
  }
  return out;
}

ReferenceImage reference_from_render(const RenderOutput& render) {
  ReferenceImage ref;
  ref.rgba = RgbaImage(render.shaded.width, render.shaded.height);
  for (std::size_t i = 0, n = render.depth_mask.data.size(); i < n; ++i) {
    for (int c = 0; c < 3; ++c) ref.rgba.data[4 * i + c] = render.shaded.data[3 * i + c];
    ref.rgba.data[4 * i + 3] = render.depth_mask.data[i] ? 255 : 0;
  }
  return ref;
}

}  // namespace minia
