#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "wbc/error.hpp"
#include "wbc/image.hpp"

namespace wbc::preprocess {

/// Min-max rescale to 0..255 with round-half-up. A constant plane maps to 0.
inline ByteImage quantize_plane(const ScalarPlane& plane) {
  const auto values = plane.values();
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  ByteImage out(plane.width(), plane.height(), std::uint8_t{0});
  if (!(range > 0.0)) return out;
  auto dst = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double scaled = std::floor((values[i] - lo) / range * 255.0 + 0.5);
    dst[i] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  return out;
}

inline std::array<std::uint64_t, 256> histogram(const ByteImage& image) {
  std::array<std::uint64_t, 256> counts{};
  for (const std::uint8_t v : image.values()) ++counts[v];
  return counts;
}

/// CDF remap out(v) = round(255 * (cdf(v) - cdf_min) / (N - cdf_min)).
/// Images with a single distinct value are returned unchanged.
inline ByteImage hist_equalize(const ByteImage& image) {
  const auto counts = histogram(image);
  const auto total = static_cast<std::uint64_t>(image.size());
  std::uint64_t cdf_min = 0;
  for (const auto c : counts) {
    if (c != 0) {
      cdf_min = c;
      break;
    }
  }
  if (cdf_min == total) return image;

  std::array<std::uint8_t, 256> remap{};
  std::uint64_t cdf = 0;
  const double denom = static_cast<double>(total - cdf_min);
  for (int v = 0; v < 256; ++v) {
    cdf += counts[v];
    const double numer = cdf >= cdf_min ? static_cast<double>(cdf - cdf_min) : 0.0;
    remap[v] = static_cast<std::uint8_t>(std::floor(255.0 * numer / denom + 0.5));
  }
  ByteImage out = image;
  for (auto& v : out.values()) v = remap[v];
  return out;
}

// ---------------------------------------------------------------------------
// Three-class intensity clustering

inline constexpr int kClusters = 3;
inline constexpr double kVarianceFloor = 1e-4;

struct GaussianMixture1D {
  std::array<double, kClusters> means{};
  std::array<double, kClusters> variances{};
  std::array<double, kClusters> weights{};

  double log_density(int k, double v) const {
    const double diff = v - means[k];
    return std::log(weights[k]) -
           0.5 * std::log(2.0 * std::numbers::pi * variances[k]) -
           0.5 * diff * diff / variances[k];
  }
};

struct GmmFit {
  GaussianMixture1D mixture;
  /// Accepted EM steps.
  int iterations = 0;
  /// False when max_iters ran out before the likelihood stalled.
  bool converged = false;
  /// Log-likelihood of the initialization followed by each accepted step.
  std::vector<double> log_likelihood;
};

namespace detail {

using Histogram = std::array<std::uint64_t, 256>;

inline double log_sum_exp(const std::array<double, kClusters>& terms) {
  const double peak = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (const double t : terms) sum += std::exp(t - peak);
  return peak + std::log(sum);
}

inline double mixture_log_likelihood(const GaussianMixture1D& gmm, const Histogram& counts) {
  double ll = 0.0;
  for (int v = 0; v < 256; ++v) {
    if (counts[v] == 0) continue;
    std::array<double, kClusters> terms{};
    for (int k = 0; k < kClusters; ++k) terms[k] = gmm.log_density(k, v);
    ll += static_cast<double>(counts[v]) * log_sum_exp(terms);
  }
  return ll;
}

inline GaussianMixture1D em_step(const GaussianMixture1D& gmm, const Histogram& counts,
                                 double total) {
  std::array<double, kClusters> mass{};
  std::array<double, kClusters> first{};
  std::array<std::array<double, kClusters>, 256> resp{};
  for (int v = 0; v < 256; ++v) {
    if (counts[v] == 0) continue;
    std::array<double, kClusters> terms{};
    for (int k = 0; k < kClusters; ++k) terms[k] = gmm.log_density(k, v);
    const double norm = log_sum_exp(terms);
    for (int k = 0; k < kClusters; ++k) {
      resp[v][k] = static_cast<double>(counts[v]) * std::exp(terms[k] - norm);
      mass[k] += resp[v][k];
      first[k] += resp[v][k] * v;
    }
  }
  GaussianMixture1D next = gmm;
  for (int k = 0; k < kClusters; ++k) {
    if (!(mass[k] > 0.0)) {
      next.weights[k] = 0.0;
      continue;
    }
    const double mean = first[k] / mass[k];
    double second = 0.0;
    for (int v = 0; v < 256; ++v) {
      const double diff = v - mean;
      second += resp[v][k] * diff * diff;
    }
    next.means[k] = mean;
    next.variances[k] = std::max(second / mass[k], kVarianceFloor);
    next.weights[k] = mass[k] / total;
  }
  return next;
}

inline GaussianMixture1D sorted_by_mean(GaussianMixture1D gmm) {
  std::array<int, kClusters> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return gmm.means[i] < gmm.means[j]; });
  GaussianMixture1D out;
  for (int k = 0; k < kClusters; ++k) {
    out.means[k] = gmm.means[order[k]];
    out.variances[k] = gmm.variances[order[k]];
    out.weights[k] = gmm.weights[order[k]];
  }
  return out;
}

/// Value at 0-based rank floor(p * (N - 1)) of the sorted pixel values.
inline double percentile(const Histogram& counts, std::uint64_t total, double p) {
  const auto rank = static_cast<std::uint64_t>(std::floor(p * static_cast<double>(total - 1)));
  std::uint64_t seen = 0;
  for (int v = 0; v < 256; ++v) {
    seen += counts[v];
    if (seen > rank) return v;
  }
  return 255.0;
}

}  // namespace detail

/// EM fit of a three-component univariate Gaussian mixture to the pixel
/// histogram. Starts from the 25/50/75th percentiles with equal weights and
/// the global variance; when those percentiles are not distinct, the minimum,
/// median and maximum occupied levels are used instead. A step is accepted only if it raises the
/// log-likelihood by at least tol * |current log-likelihood|; the first
/// rejected step ends the fit.
inline GmmFit fit_gmm3(const ByteImage& image, int max_iters = 100, double tol = 1e-6) {
  const auto counts = histogram(image);
  const int distinct = static_cast<int>(
      std::count_if(counts.begin(), counts.end(), [](auto c) { return c != 0; }));
  if (distinct < kClusters) {
    throw Error(ErrorKind::DegenerateInput,
                "clustering needs at least 3 distinct intensities, image has " +
                    std::to_string(distinct));
  }
  const auto total = static_cast<std::uint64_t>(image.size());
  const double n = static_cast<double>(total);

  double mean = 0.0;
  for (int v = 0; v < 256; ++v) mean += static_cast<double>(counts[v]) * v;
  mean /= n;
  double variance = 0.0;
  for (int v = 0; v < 256; ++v) variance += static_cast<double>(counts[v]) * (v - mean) * (v - mean);
  variance = std::max(variance / n, kVarianceFloor);

  GmmFit fit;
  const std::array<double, kClusters> quantiles{0.25, 0.5, 0.75};
  for (int k = 0; k < kClusters; ++k) {
    fit.mixture.means[k] = detail::percentile(counts, total, quantiles[k]);
    fit.mixture.variances[k] = variance;
    fit.mixture.weights[k] = 1.0 / kClusters;
  }
  // A dominant intensity can pin several percentiles to one level, and EM
  // never separates identical components. Seed from the occupied levels instead.
  if (!(fit.mixture.means[0] < fit.mixture.means[1] && fit.mixture.means[1] < fit.mixture.means[2])) {
    std::vector<int> levels;
    for (int v = 0; v < 256; ++v) {
      if (counts[v] != 0) levels.push_back(v);
    }
    fit.mixture.means = {static_cast<double>(levels.front()),
                         static_cast<double>(levels[(levels.size() - 1) / 2]),
                         static_cast<double>(levels.back())};
  }
  double ll = detail::mixture_log_likelihood(fit.mixture, counts);
  fit.log_likelihood.push_back(ll);

  for (int iter = 0; iter < max_iters; ++iter) {
    const GaussianMixture1D candidate = detail::em_step(fit.mixture, counts, n);
    const double next_ll = detail::mixture_log_likelihood(candidate, counts);
    if (!(next_ll - ll >= tol * std::max(std::abs(ll), 1.0))) {
      fit.converged = true;
      break;
    }
    fit.mixture = candidate;
    ll = next_ll;
    fit.log_likelihood.push_back(ll);
    ++fit.iterations;
  }
  fit.mixture = detail::sorted_by_mean(fit.mixture);
  return fit;
}

/// Maximum-posterior label per pixel; ties go to the smaller index.
inline LabelMask classify_pixels(const ByteImage& image, const GaussianMixture1D& gmm) {
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    int best = 0;
    double best_score = gmm.log_density(0, v);
    for (int k = 1; k < kClusters; ++k) {
      const double score = gmm.log_density(k, v);
      if (score > best_score) {
        best = k;
        best_score = score;
      }
    }
    lut[v] = static_cast<std::uint8_t>(best);
  }
  LabelMask out(image.width(), image.height());
  auto dst = out.values();
  const auto src = image.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[src[i]];
  return out;
}

enum class Polarity { Highest, Lowest };

inline LabelMask select_foreground(const LabelMask& labels, const GaussianMixture1D& gmm,
                                   Polarity polarity = Polarity::Highest) {
  int chosen = 0;
  for (int k = 1; k < kClusters; ++k) {
    const bool better = polarity == Polarity::Highest ? gmm.means[k] > gmm.means[chosen]
                                                      : gmm.means[k] < gmm.means[chosen];
    if (better) chosen = k;
  }
  LabelMask out(labels.width(), labels.height());
  auto dst = out.values();
  const auto src = labels.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == chosen ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Binary morphology

struct Offset {
  int dx;
  int dy;
};

inline std::vector<Offset> disk_offsets(int radius) {
  std::vector<Offset> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.push_back({dx, dy});
    }
  }
  return offsets;
}

/// Pixels whose disk neighborhood leaves the image are eroded.
inline LabelMask erode(const LabelMask& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  LabelMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      bool keep = true;
      for (const auto& o : offsets) {
        const int nx = x + o.dx;
        const int ny = y + o.dy;
        if (!mask.contains(nx, ny) || !mask(nx, ny)) {
          keep = false;
          break;
        }
      }
      out(x, y) = keep ? 1 : 0;
    }
  }
  return out;
}

inline LabelMask dilate(const LabelMask& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  LabelMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      for (const auto& o : offsets) {
        const int nx = x + o.dx;
        const int ny = y + o.dy;
        if (mask.contains(nx, ny)) out(nx, ny) = 1;
      }
    }
  }
  return out;
}

inline LabelMask morph_open(const LabelMask& mask, int radius) {
  return dilate(erode(mask, radius), radius);
}

// ---------------------------------------------------------------------------
// Connected components (8-connected foreground)

struct ComponentInfo {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int area = 0;
};

struct Components {
  /// 0 = background, otherwise 1-based index into info.
  Plane<int> labels;
  std::vector<ComponentInfo> info;
};

inline Components label_components(const LabelMask& mask) {
  Components out{Plane<int>(mask.width(), mask.height(), 0), {}};
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y) || out.labels(x, y) != 0) continue;
      const int id = static_cast<int>(out.info.size()) + 1;
      ComponentInfo info{x, y, x, y, 0};
      out.labels(x, y) = id;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++info.area;
        info.x0 = std::min(info.x0, cx);
        info.x1 = std::max(info.x1, cx);
        info.y0 = std::min(info.y0, cy);
        info.y1 = std::max(info.y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (mask.contains(nx, ny) && mask(nx, ny) && out.labels(nx, ny) == 0) {
              out.labels(nx, ny) = id;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      out.info.push_back(info);
    }
  }
  return out;
}

inline LabelMask remove_small_components(const LabelMask& mask, int min_area) {
  if (min_area <= 0) return mask;
  const Components comps = label_components(mask);
  LabelMask out(mask.width(), mask.height());
  auto dst = out.values();
  const auto labels = comps.labels.values();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int id = labels[i];
    dst[i] = (id != 0 && comps.info[id - 1].area >= min_area) ? 1 : 0;
  }
  return out;
}

/// Background pixels not 4-connected to the border become foreground.
inline LabelMask fill_holes(const LabelMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  Plane<std::uint8_t> outside(w, h, 0);
  std::vector<std::pair<int, int>> stack;
  auto seed = [&](int x, int y) {
    if (!mask(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      stack.emplace_back(x, y);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  constexpr std::array<Offset, 4> kNeighbors{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!stack.empty()) {
    const auto [cx, cy] = stack.back();
    stack.pop_back();
    for (const auto& o : kNeighbors) {
      const int nx = cx + o.dx;
      const int ny = cy + o.dy;
      if (mask.contains(nx, ny)) seed(nx, ny);
    }
  }
  LabelMask out(w, h);
  auto dst = out.values();
  const auto src = mask.values();
  const auto reached = outside.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] || !reached[i]) ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Regions of interest

/// A connected region with inclusive bounds in image coordinates and a
/// membership mask covering the bounding box.
struct Roi {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int area = 0;
  LabelMask mask;

  int width() const noexcept { return x1 - x0 + 1; }
  int height() const noexcept { return y1 - y0 + 1; }
  int box_area() const noexcept { return width() * height(); }
  /// Image-coordinate membership test.
  bool contains(int x, int y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1 && mask(x - x0, y - y0) != 0;
  }

  /// Rectangle with every pixel a member.
  static Roi rectangle(int x0, int y0, int x1, int y1) {
    Roi roi{x0, y0, x1, y1, 0, {}};
    roi.mask = LabelMask(roi.width(), roi.height(), std::uint8_t{1});
    roi.area = roi.box_area();
    return roi;
  }
};

/// One ROI per 8-connected component of at least min_area pixels, largest
/// first (ties by y0 then x0). Returns a single full-image ROI when nothing
/// survives.
inline std::vector<Roi> extract_rois(const LabelMask& mask, int min_area) {
  const Components comps = label_components(mask);
  std::vector<Roi> rois;
  std::vector<int> ids;
  for (std::size_t i = 0; i < comps.info.size(); ++i) {
    const auto& c = comps.info[i];
    if (c.area < std::max(min_area, 1)) continue;
    Roi roi{c.x0, c.y0, c.x1, c.y1, c.area,
            LabelMask(c.x1 - c.x0 + 1, c.y1 - c.y0 + 1, std::uint8_t{0})};
    const int id = static_cast<int>(i) + 1;
    for (int y = c.y0; y <= c.y1; ++y) {
      for (int x = c.x0; x <= c.x1; ++x) {
        if (comps.labels(x, y) == id) roi.mask(x - c.x0, y - c.y0) = 1;
      }
    }
    rois.push_back(std::move(roi));
  }
  std::stable_sort(rois.begin(), rois.end(), [](const Roi& a, const Roi& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.y0 != b.y0) return a.y0 < b.y0;
    return a.x0 < b.x0;
  });
  if (rois.empty()) rois.push_back(Roi::rectangle(0, 0, mask.width() - 1, mask.height() - 1));
  return rois;
}

}  // namespace wbc::preprocess
