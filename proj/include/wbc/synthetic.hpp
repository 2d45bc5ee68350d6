#pragma once

// Seeded generators for synthetic SPD class data and synthetic cell images.
// Used by the test suites and by the CLI's `synth` command.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <tuple>
#include <numbers>
#include <string>
#include <vector>

#include "wbc/classify.hpp"
#include "wbc/colorspace.hpp"
#include "wbc/image.hpp"
#include "wbc/random.hpp"
#include "wbc/spdgeom.hpp"

namespace wbc::synth {

// ---------------------------------------------------------------------------
// SPD class clusters

struct SpdClusterOptions {
  int dimension = 9;
  int classes = 5;
  int per_class = 60;
  /// Frobenius norm of the tangent vector at the identity for each class mean.
  double mean_radius = 2.0;
  /// Pairwise Riemannian distance every pair of class means must reach.
  double min_separation = 2.0;
  /// Per-coordinate standard deviation of the whitened tangent noise.
  double noise = 0.3;
};

inline spd::SymMatrix random_symmetric(Rng& rng, int n, double stddev) {
  spd::TangentVector v(spd::tangent_dimension(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal(0.0, stddev);
  return spd::unupper_vec(v, n);
}

inline std::vector<spd::SpdMatrix> class_means(const SpdClusterOptions& options, Rng& rng) {
  const int n = options.dimension;
  std::vector<spd::SpdMatrix> means;
  while (static_cast<int>(means.size()) < options.classes) {
    spd::SymMatrix s = random_symmetric(rng, n, 1.0);
    s *= options.mean_radius / s.norm();
    const spd::SpdMatrix candidate = spd::spd_exp(s);
    const bool separated = std::all_of(means.begin(), means.end(), [&](const auto& m) {
      return spd::riemann_distance(m, candidate) >= options.min_separation;
    });
    if (separated) means.push_back(candidate);
  }
  return means;
}

/// Samples exp_map(mean_c, mean_c^1/2 unupper(z) mean_c^1/2) with
/// z ~ N(0, noise^2 I), class-major order.
inline std::vector<classify::LabeledSample> spd_clusters(const SpdClusterOptions& options,
                                                         Rng& rng) {
  const auto means = class_means(options, rng);
  std::vector<classify::LabeledSample> samples;
  for (int c = 0; c < options.classes; ++c) {
    const spd::SpdMatrix root = spd::spd_pow(means[c], 0.5);
    for (int i = 0; i < options.per_class; ++i) {
      const spd::SymMatrix z = random_symmetric(rng, options.dimension, options.noise);
      samples.push_back({spd::exp_map(means[c], root * z * root), c});
    }
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Cell images

inline const std::array<std::string, 5> kCellClassNames{"basophil", "eosinophil", "lymphocyte",
                                                        "monocyte", "neutrophil"};

/// 8-bit colors near a base color whose Lab a-channel stays within `a_tolerance`
/// of the base, indexed by lightness. Lets a texture vary L while the
/// a-channel (used for segmentation) stays flat.
class IsoChromaPalette {
 public:
  IsoChromaPalette(Rgb base, double a_tolerance, int search = 40) {
    const double a0 = color::rgb8_to_lab(base).a;
    base_lightness_ = color::rgb8_to_lab(base).l;
    std::vector<std::pair<double, Rgb>> found;
    for (int dr = -search; dr <= search; ++dr) {
      for (int dg = -search; dg <= search; ++dg) {
        for (int db = -search; db <= search; ++db) {
          const int r = base.r + dr, g = base.g + dg, b = base.b + db;
          if (r < 0 || g < 0 || b < 0 || r > 255 || g > 255 || b > 255) continue;
          const Rgb c{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                      static_cast<std::uint8_t>(b)};
          const color::Lab lab = color::rgb8_to_lab(c);
          if (std::abs(lab.a - a0) < a_tolerance) found.emplace_back(lab.l, c);
        }
      }
    }
    std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first < y.first;
      return std::tie(x.second.r, x.second.g, x.second.b) <
             std::tie(y.second.r, y.second.g, y.second.b);
    });
    for (const auto& [l, c] : found) {
      lightness_.push_back(l);
      colors_.push_back(c);
    }
  }

  double base_lightness() const { return base_lightness_; }

  /// Color whose lightness is closest to base + offset.
  Rgb at(double offset) const {
    const double target = base_lightness_ + offset;
    auto it = std::lower_bound(lightness_.begin(), lightness_.end(), target);
    if (it == lightness_.end()) return colors_.back();
    if (it != lightness_.begin() && target - *(it - 1) < *it - target) --it;
    return colors_[static_cast<std::size_t>(it - lightness_.begin())];
  }

 private:
  double base_lightness_ = 0.0;
  std::vector<double> lightness_;
  std::vector<Rgb> colors_;
};

struct CellPalettes {
  IsoChromaPalette background{Rgb{230, 215, 210}, 0.03};
  IsoChromaPalette erythrocyte{Rgb{215, 150, 165}, 0.03};
  IsoChromaPalette nucleus{Rgb{140, 55, 150}, 0.1};

  static const CellPalettes& instance() {
    static const CellPalettes palettes;
    return palettes;
  }
};

struct CellImage {
  RasterImage image;
  /// Ground-truth nucleus mask (1 inside the ellipse).
  LabelMask truth;
  int label = 0;
};

struct CellOptions {
  int width = 720;
  int height = 576;
};

namespace detail {

/// Hash-based white noise in [-1, 1].
inline double pixel_noise(std::uint64_t seed, int x, int y) {
  std::uint64_t h = seed ^ (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ULL) ^
                    (static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4FULL);
  h ^= h >> 33;
  h *= 0xFF51AFD7ED558CCDULL;
  h ^= h >> 33;
  h *= 0xC4CEB9FE1A85EC53ULL;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

/// Class-specific texture in [-1, 1]. Classes differ in second-order
/// structure: smooth blobs, white noise, horizontal stripes, vertical stripes
/// and a dotted lattice.
class Texture {
 public:
  Texture(int kind, Rng& rng) : kind_(kind), seed_(rng.next_u64()) {
    const double tilt = rng.uniform(-0.17, 0.17);
    cos_ = std::cos(tilt);
    sin_ = std::sin(tilt);
    phase_ = rng.uniform(0.0, 2.0 * std::numbers::pi);
    period_ = kind == 4 ? rng.uniform(10.0, 14.0) : rng.uniform(7.0, 10.0);
    for (auto& wave : waves_) {
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double k = 2.0 * std::numbers::pi / rng.uniform(40.0, 70.0);
      wave = {k * std::cos(angle), k * std::sin(angle), rng.uniform(0.0, 2.0 * std::numbers::pi)};
    }
  }

  double operator()(int x, int y) const {
    const double u = cos_ * x + sin_ * y;
    const double v = -sin_ * x + cos_ * y;
    const double w = 2.0 * std::numbers::pi / period_;
    double t = 0.0;
    switch (kind_) {
      case 0:
        for (const auto& wave : waves_) t += std::sin(wave[0] * x + wave[1] * y + wave[2]);
        t /= 3.0;
        break;
      case 1: t = noise(x, y); break;
      case 2: t = 0.8 * std::sin(w * v + phase_) + 0.2 * noise(x, y); break;
      case 3: t = 0.8 * std::sin(w * u + phase_) + 0.2 * noise(x, y); break;
      default:
        t = 0.8 * std::sin(w * u + phase_) * std::sin(w * v + phase_) + 0.2 * noise(x, y);
        break;
    }
    return std::clamp(t, -1.0, 1.0);
  }

 private:
  double noise(int x, int y) const { return pixel_noise(seed_, x, y); }

  int kind_;
  std::uint64_t seed_;
  double cos_ = 1.0;
  double sin_ = 0.0;
  double phase_ = 0.0;
  double period_ = 8.0;
  std::array<std::array<double, 3>, 3> waves_{};
};

}  // namespace detail

/// One elliptical nucleus textured by class over a textured background with
/// a handful of erythrocyte disks.
inline CellImage render_cell(int label, Rng& rng, const CellOptions& options = {}) {
  const auto& palettes = CellPalettes::instance();
  const int w = options.width;
  const int h = options.height;
  CellImage out{RasterImage(w, h), LabelMask(w, h, std::uint8_t{0}), label};

  const std::uint64_t background_seed = rng.next_u64();
  const double bg_kx = 2.0 * std::numbers::pi / rng.uniform(80.0, 120.0);
  const double bg_ky = 2.0 * std::numbers::pi / rng.uniform(80.0, 120.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = 0.5 * std::sin(bg_kx * x) * std::cos(bg_ky * y) +
                       0.5 * detail::pixel_noise(background_seed, x, y);
      out.image(x, y) = palettes.background.at(6.0 * t);
    }
  }

  const int cells = 5 + static_cast<int>(rng.below(5));
  for (int i = 0; i < cells; ++i) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double radius = rng.uniform(28.0, 42.0);
    const std::uint64_t seed = rng.next_u64();
    for (int y = std::max(0, static_cast<int>(cy - radius)); y < std::min(h, static_cast<int>(cy + radius) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - radius)); x < std::min(w, static_cast<int>(cx + radius) + 1); ++x) {
        const double dx = x - cx, dy = y - cy;
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r > radius) continue;
        // pale center like a biconcave disk
        const double t = -0.6 * std::exp(-r * r / (0.2 * radius * radius)) +
                         0.4 * detail::pixel_noise(seed, x, y);
        out.image(x, y) = palettes.erythrocyte.at(8.0 * t);
      }
    }
  }

  const double cx = rng.uniform(0.3 * w, 0.7 * w);
  const double cy = rng.uniform(0.3 * h, 0.7 * h);
  const double semi_major = rng.uniform(70.0, 110.0);
  const double semi_minor = rng.uniform(55.0, std::min(semi_major, 85.0));
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const detail::Texture texture(label, rng);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (ct * dx + st * dy) / semi_major;
      const double v = (-st * dx + ct * dy) / semi_minor;
      if (u * u + v * v > 1.0) continue;
      out.truth(x, y) = 1;
      out.image(x, y) = palettes.nucleus.at(14.0 * texture(x, y));
    }
  }
  return out;
}

/// Writes `per_class` PPM images into one directory per class under root and
/// returns the number of files written. `visit`, when given, sees every
/// rendered cell with its output path.
inline int write_cell_dataset(
    const std::filesystem::path& root, int per_class, std::uint64_t seed,
    const CellOptions& options = {},
    const std::function<void(const CellImage&, const std::filesystem::path&)>& visit = {}) {
  Rng rng(seed);
  int written = 0;
  for (int c = 0; c < static_cast<int>(kCellClassNames.size()); ++c) {
    const auto dir = root / kCellClassNames[c];
    std::filesystem::create_directories(dir);
    for (int i = 0; i < per_class; ++i) {
      const CellImage cell = render_cell(c, rng, options);
      char name[32];
      std::snprintf(name, sizeof name, "img_%04d.ppm", i);
      write_ppm_file((dir / name).string(), cell.image);
      if (visit) visit(cell, dir / name);
      ++written;
    }
  }
  return written;
}

}  // namespace wbc::synth
