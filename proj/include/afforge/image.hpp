#ifndef AFFORGE_IMAGE_HPP
#define AFFORGE_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "afforge/error.hpp"
#include "afforge/grid.hpp"

namespace afforge {

/// Interleaved 8-bit image with 1 (gray), 3 (RGB) or 4 (RGBA) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image&) const = default;
};

namespace detail {

inline png_uint_32 png_format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw Error(ErrorKind::InvalidArgument, "unsupported channel count for PNG");
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = detail::png_format_for(img.channels);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("png sizing failed: ") + desc.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, std::string("png encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

/// Decodes to gray, RGB or RGBA depending on what the file stores.
inline Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::Io, std::string("png header: ") + desc.message);
  }
  const bool alpha = desc.format & PNG_FORMAT_FLAG_ALPHA;
  const bool color = desc.format & PNG_FORMAT_FLAG_COLOR;
  const int channels = color ? (alpha ? 4 : 3) : (alpha ? 4 : 1);
  desc.format = detail::png_format_for(channels);
  Image img(static_cast<int>(desc.width), static_cast<int>(desc.height), channels);
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw Error(ErrorKind::Io, std::string("png decode: ") + desc.message);
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Image read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }
inline void write_png(const std::filesystem::path& path, const Image& img) { write_file_bytes(path, encode_png(img)); }

/// 8-bit grayscale rendering of a [0,1] map.
template <typename T>
Image to_gray8(const Grid<T>& map) {
  Image img(map.width(), map.height(), 1);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double v = std::clamp(static_cast<double>(map.values()[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

namespace detail {

/// Half-pixel-centre source coordinate for destination index `dst`.
inline double source_coord(int dst, int src_size, int dst_size) {
  const double s = (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(src_size - 1));
}

template <typename Fetch>
double bilerp(Fetch&& fetch, double sx, double sy, int w, int h) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = sx - x0, ay = sy - y0;
  const double top = (1.0 - ax) * fetch(x0, y0) + ax * fetch(x1, y0);
  const double bottom = (1.0 - ax) * fetch(x0, y1) + ax * fetch(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace detail

inline Image resize_bilinear(const Image& src, int width, int height) {
  Image dst(width, height, src.channels);
  for (int y = 0; y < height; ++y) {
    const double sy = detail::source_coord(y, src.height, height);
    for (int x = 0; x < width; ++x) {
      const double sx = detail::source_coord(x, src.width, width);
      for (int c = 0; c < src.channels; ++c) {
        const double v = detail::bilerp([&](int px, int py) { return static_cast<double>(src.at(px, py, c)); },
                                        sx, sy, src.width, src.height);
        dst.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return dst;
}

template <typename T>
Grid<T> resize_bilinear(const Grid<T>& src, int width, int height) {
  Grid<T> dst(width, height);
  for (int y = 0; y < height; ++y) {
    const double sy = detail::source_coord(y, src.height(), height);
    for (int x = 0; x < width; ++x) {
      const double sx = detail::source_coord(x, src.width(), width);
      dst(x, y) = static_cast<T>(detail::bilerp([&](int px, int py) { return static_cast<double>(src(px, py)); },
                                                sx, sy, src.width(), src.height()));
    }
  }
  return dst;
}

}  // namespace afforge

#endif  // AFFORGE_IMAGE_HPP
