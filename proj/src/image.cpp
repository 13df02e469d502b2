#include "minia/image.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <png.h>

#include "minia/error.hpp"

namespace minia {
namespace {

template <int Channels>
PngBytes encode(const Image8<Channels>& image, png_uint_32 format) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.data.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("PNG sizing failed: ") + png.message);
  }
  PngBytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.data.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("PNG encoding failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Mask Mask::mirrored_horizontally() const {
  Mask out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set(width - 1 - x, y, at(x, y));
  return out;
}

GrayImage mask_to_gray(const Mask& mask) {
  GrayImage out(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.data.size(); ++i) out.data[i] = mask.data[i] ? 255 : 0;
  return out;
}

PngBytes encode_png(const GrayImage& image) { return encode(image, PNG_FORMAT_GRAY); }
PngBytes encode_png(const RgbImage& image) { return encode(image, PNG_FORMAT_RGB); }
PngBytes encode_png(const RgbaImage& image) { return encode(image, PNG_FORMAT_RGBA); }

RgbaImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::MalformedFile, std::string("PNG header: ") + png.message, 0);
  }
  png.format = PNG_FORMAT_RGBA;
  RgbaImage out(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error(ErrorCode::MalformedFile, std::string("PNG body: ") + png.message, 0);
  }
  return out;
}

RgbaImage read_png(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace minia
