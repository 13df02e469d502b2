#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace minia {

using PngBytes = std::vector<std::uint8_t>;

/// Row-major interleaved 8-bit raster, row 0 at the top.
template <int Channels>
struct Image8 {
  static constexpr int channels = Channels;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * Channels, fill) {}

  std::uint8_t* pixel(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * Channels; }
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * Channels;
  }

  bool operator==(const Image8&) const = default;
};

using GrayImage = Image8<1>;
using RgbImage = Image8<3>;
using RgbaImage = Image8<4>;

/// Boolean raster stored one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  Mask mirrored_horizontally() const;

  bool operator==(const Mask&) const = default;
};

/// Per-pixel float raster (depth values).
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h, float fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
};

GrayImage mask_to_gray(const Mask& mask);

PngBytes encode_png(const GrayImage& image);
PngBytes encode_png(const RgbImage& image);
PngBytes encode_png(const RgbaImage& image);

/// Decodes any PNG into RGBA; images without alpha come back fully opaque.
RgbaImage decode_png(std::span<const std::uint8_t> bytes);

RgbaImage read_png(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace minia
