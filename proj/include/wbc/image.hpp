#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wbc/error.hpp"

namespace wbc {

/// Row-major W x H grid. Used for scalar channels (double), 8-bit images and
/// label masks alike.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(ErrorKind::DegenerateInput, "plane dimensions must be positive");
    }
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Plane(int width, int height, std::vector<T> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1) {
      throw Error(ErrorKind::DegenerateInput, "plane dimensions must be positive");
    }
    if (values_.size() != static_cast<std::size_t>(width) * height) {
      throw Error(ErrorKind::LengthMismatch, "value count does not match width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(int x, int y) { return values_[index(x, y)]; }
  const T& operator()(int x, int y) const { return values_[index(x, y)]; }

  /// Access with coordinates clamped to the grid (replicate border).
  const T& clamped(int x, int y) const {
    x = x < 0 ? 0 : (x >= width_ ? width_ - 1 : x);
    y = y < 0 ? 0 : (y >= height_ ? height_ - 1 : y);
    return values_[index(x, y)];
  }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  /// Copy of the rectangle [x0, x1] x [y0, y1] (inclusive bounds).
  Plane crop(int x0, int y0, int x1, int y1) const {
    Plane out(x1 - x0 + 1, y1 - y0 + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) out(x - x0, y - y0) = (*this)(x, y);
    }
    return out;
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

using ScalarPlane = Plane<double>;
using ByteImage = Plane<std::uint8_t>;
/// Cluster indices {0,1,2}, binary {0,1}, or component ids (0 = background).
using LabelMask = Plane<std::uint8_t>;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using RasterImage = Plane<Rgb>;

namespace detail {

inline void skip_ppm_whitespace(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_ppm_int(std::istream& in, const std::string& what) {
  skip_ppm_whitespace(in);
  int value = -1;
  if (!(in >> value) || value < 0) {
    throw Error(ErrorKind::Format, "PPM header: bad " + what);
  }
  return value;
}

}  // namespace detail

/// Binary PPM (P6, maxval 255).
inline RasterImage read_ppm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw Error(ErrorKind::Format, "not a binary PPM (P6) stream");
  }
  const int width = detail::read_ppm_int(in, "width");
  const int height = detail::read_ppm_int(in, "height");
  const int maxval = detail::read_ppm_int(in, "maxval");
  if (width < 1 || height < 1) throw Error(ErrorKind::Format, "PPM has zero size");
  if (maxval != 255) throw Error(ErrorKind::Format, "only maxval 255 is supported");
  // exactly one whitespace byte separates the header from the raster
  const int sep = in.get();
  if (sep != ' ' && sep != '\n' && sep != '\r' && sep != '\t') {
    throw Error(ErrorKind::Format, "PPM header not terminated by whitespace");
  }
  std::vector<Rgb> pixels(static_cast<std::size_t>(width) * height);
  static_assert(sizeof(Rgb) == 3);
  in.read(reinterpret_cast<char*>(pixels.data()),
          static_cast<std::streamsize>(pixels.size() * 3));
  if (in.gcount() != static_cast<std::streamsize>(pixels.size() * 3)) {
    throw Error(ErrorKind::Format, "PPM raster truncated");
  }
  return RasterImage(width, height, std::move(pixels));
}

inline void write_ppm(std::ostream& out, const RasterImage& image) {
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.values().data()),
            static_cast<std::streamsize>(image.size() * 3));
}

inline RasterImage read_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  try {
    return read_ppm(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

inline void write_ppm_file(const std::string& path, const RasterImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_ppm(out, image);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

/// Nonzero -> white, zero -> black.
inline RasterImage mask_to_raster(const LabelMask& mask) {
  RasterImage out(mask.width(), mask.height());
  auto dst = out.values();
  auto src = mask.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::uint8_t v = src[i] ? 255 : 0;
    dst[i] = Rgb{v, v, v};
  }
  return out;
}

}  // namespace wbc
