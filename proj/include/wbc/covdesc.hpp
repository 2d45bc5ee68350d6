#pragma once

#include <Eigen/Dense>
#include <array>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wbc/error.hpp"
#include "wbc/image.hpp"
#include "wbc/preprocess.hpp"
#include "wbc/spdgeom.hpp"

namespace wbc::cov {

using spd::Matrix;
using spd::SpdMatrix;
using preprocess::Roi;

/// Per-pixel feature channels. Derivatives are unnormalized central
/// differences with replicate borders.
enum class Feature {
  X,          ///< column
  Y,          ///< row
  AbsIx,      ///< |I_x|
  AbsIy,      ///< |I_y|
  GradMag,    ///< sqrt(I_x^2 + I_y^2)
  AbsIxx,     ///< |I_xx|
  AbsIxy,     ///< |I_xy|
  AbsIyy,     ///< |I_yy|
  EdgeAngle,  ///< atan(|I_x| / |I_y|)
};

inline constexpr std::array<Feature, 9> kDefaultFeatures{
    Feature::X,      Feature::Y,      Feature::AbsIx,  Feature::AbsIy,    Feature::GradMag,
    Feature::AbsIxx, Feature::AbsIxy, Feature::AbsIyy, Feature::EdgeAngle};

inline constexpr std::array<std::string_view, 9> kFeatureNames{
    "x", "y", "ix", "iy", "grad", "ixx", "ixy", "iyy", "angle"};

inline std::string_view feature_name(Feature f) { return kFeatureNames[static_cast<int>(f)]; }

inline std::optional<Feature> parse_feature(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  return std::nullopt;
}

inline std::vector<Feature> default_features() {
  return {kDefaultFeatures.begin(), kDefaultFeatures.end()};
}

struct FeatureStack {
  std::vector<Feature> features;
  std::vector<ScalarPlane> layers;

  int width() const { return layers.front().width(); }
  int height() const { return layers.front().height(); }
  int dimension() const { return static_cast<int>(layers.size()); }
};

inline FeatureStack feature_map(const ScalarPlane& gray,
                                const std::vector<Feature>& features = default_features()) {
  if (features.size() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "at least two features are required");
  }
  const int w = gray.width();
  const int h = gray.height();
  FeatureStack stack{features, {}};
  stack.layers.assign(features.size(), ScalarPlane(w, h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto at = [&](int dx, int dy) { return gray.clamped(x + dx, y + dy); };
      const double ix = at(1, 0) - at(-1, 0);
      const double iy = at(0, 1) - at(0, -1);
      for (std::size_t k = 0; k < features.size(); ++k) {
        double value = 0.0;
        switch (features[k]) {
          case Feature::X: value = x; break;
          case Feature::Y: value = y; break;
          case Feature::AbsIx: value = std::abs(ix); break;
          case Feature::AbsIy: value = std::abs(iy); break;
          case Feature::GradMag: value = std::sqrt(ix * ix + iy * iy); break;
          case Feature::AbsIxx: value = std::abs(at(1, 0) - 2.0 * at(0, 0) + at(-1, 0)); break;
          case Feature::AbsIxy:
            value = std::abs(at(1, 1) - at(-1, 1) - at(1, -1) + at(-1, -1));
            break;
          case Feature::AbsIyy: value = std::abs(at(0, 1) - 2.0 * at(0, 0) + at(0, -1)); break;
          // atan2 yields pi/2 for a zero denominator and 0 when both vanish
          case Feature::EdgeAngle: value = std::atan2(std::abs(ix), std::abs(iy)); break;
        }
        stack.layers[k](x, y) = value;
      }
    }
  }
  return stack;
}

inline constexpr double kRegularization = 1e-6;

/// C + eps * max(trace(C)/d, 1) * I.
inline SpdMatrix regularize(const Matrix& c, double eps = kRegularization) {
  const double d = static_cast<double>(c.rows());
  return c + eps * std::max(c.trace() / d, 1.0) * Matrix::Identity(c.rows(), c.cols());
}

namespace detail {

inline void require_inside(const FeatureStack& stack, const Roi& roi) {
  if (roi.x0 < 0 || roi.y0 < 0 || roi.x1 >= stack.width() || roi.y1 >= stack.height() ||
      roi.x0 > roi.x1 || roi.y0 > roi.y1) {
    throw Error(ErrorKind::DimensionMismatch, "region lies outside the feature image");
  }
}

}  // namespace detail

/// Unbiased sample covariance (divisor S-1) of the feature vectors at the
/// ROI's member pixels, without regularization.
inline Matrix region_covariance_raw(const FeatureStack& stack, const Roi& roi) {
  detail::require_inside(stack, roi);
  const int d = stack.dimension();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  long count = 0;
  for (int y = roi.y0; y <= roi.y1; ++y) {
    for (int x = roi.x0; x <= roi.x1; ++x) {
      if (!roi.mask(x - roi.x0, y - roi.y0)) continue;
      for (int k = 0; k < d; ++k) mean(k) += stack.layers[k](x, y);
      ++count;
    }
  }
  if (count < 2) {
    throw Error(ErrorKind::RegionTooSmall,
                "region covariance needs at least 2 pixels, got " + std::to_string(count));
  }
  mean /= static_cast<double>(count);

  Matrix scatter = Matrix::Zero(d, d);
  Eigen::VectorXd z(d);
  for (int y = roi.y0; y <= roi.y1; ++y) {
    for (int x = roi.x0; x <= roi.x1; ++x) {
      if (!roi.mask(x - roi.x0, y - roi.y0)) continue;
      for (int k = 0; k < d; ++k) z(k) = stack.layers[k](x, y) - mean(k);
      scatter.selfadjointView<Eigen::Upper>().rankUpdate(z);
    }
  }
  Matrix c = scatter.selfadjointView<Eigen::Upper>();
  return c / static_cast<double>(count - 1);
}

inline SpdMatrix region_covariance(const FeatureStack& stack, const Roi& roi) {
  return regularize(region_covariance_raw(stack, roi));
}

/// Summed-area tables of every feature and every pairwise feature product,
/// answering rectangle covariance queries in O(d^2). Layers are centered on
/// their global mean before accumulation to limit cancellation.
class IntegralCovariance {
 public:
  explicit IntegralCovariance(const FeatureStack& stack)
      : width_(stack.width()), height_(stack.height()), dim_(stack.dimension()) {
    const int d = dim_;
    offsets_.resize(d);
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (const double v : stack.layers[k].values()) s += v;
      offsets_[k] = s / static_cast<double>(stack.layers[k].size());
    }
    const std::size_t cells = static_cast<std::size_t>(width_ + 1) * (height_ + 1);
    sums_.assign(static_cast<std::size_t>(d) * cells, 0.0);
    products_.assign(static_cast<std::size_t>(d * (d + 1) / 2) * cells, 0.0);

    std::vector<double> z(d);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        for (int k = 0; k < d; ++k) z[k] = stack.layers[k](x, y) - offsets_[k];
        const std::size_t c = cell(x + 1, y + 1);
        const std::size_t up = cell(x + 1, y);
        const std::size_t left = cell(x, y + 1);
        const std::size_t diag = cell(x, y);
        for (int k = 0; k < d; ++k) {
          double* t = &sums_[static_cast<std::size_t>(k) * cells];
          t[c] = z[k] + t[up] + t[left] - t[diag];
        }
        int slot = 0;
        for (int i = 0; i < d; ++i) {
          for (int j = i; j < d; ++j, ++slot) {
            double* t = &products_[static_cast<std::size_t>(slot) * cells];
            t[c] = z[i] * z[j] + t[up] + t[left] - t[diag];
          }
        }
      }
    }
  }

  int dimension() const noexcept { return dim_; }

  /// Unregularized covariance over the full rectangle of the ROI.
  Matrix rectangle_covariance(int x0, int y0, int x1, int y1) const {
    if (x0 < 0 || y0 < 0 || x1 >= width_ || y1 >= height_ || x0 > x1 || y0 > y1) {
      throw Error(ErrorKind::DimensionMismatch, "rectangle lies outside the feature image");
    }
    const double count = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
    if (count < 2.0) {
      throw Error(ErrorKind::RegionTooSmall, "region covariance needs at least 2 pixels");
    }
    const std::size_t cells = static_cast<std::size_t>(width_ + 1) * (height_ + 1);
    auto box = [&](const std::vector<double>& table, int slot) {
      const double* t = &table[static_cast<std::size_t>(slot) * cells];
      return t[cell(x1 + 1, y1 + 1)] - t[cell(x0, y1 + 1)] - t[cell(x1 + 1, y0)] +
             t[cell(x0, y0)];
    };
    const int d = dim_;
    Eigen::VectorXd s(d);
    for (int k = 0; k < d; ++k) s(k) = box(sums_, k);
    Matrix c(d, d);
    int slot = 0;
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j, ++slot) {
        c(i, j) = (box(products_, slot) - s(i) * s(j) / count) / (count - 1.0);
        c(j, i) = c(i, j);
      }
    }
    return c;
  }

 private:
  std::size_t cell(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * (width_ + 1) + x;
  }

  int width_;
  int height_;
  int dim_;
  std::vector<double> offsets_;
  std::vector<double> sums_;
  std::vector<double> products_;
};

/// Rectangle covariance from precomputed integral tables; the ROI's mask is
/// ignored.
inline SpdMatrix region_covariance_fast(const IntegralCovariance& tables, const Roi& roi) {
  return regularize(tables.rectangle_covariance(roi.x0, roi.y0, roi.x1, roi.y1));
}

inline SpdMatrix region_covariance_fast(const FeatureStack& stack, const Roi& roi) {
  return region_covariance_fast(IntegralCovariance(stack), roi);
}

// ---------------------------------------------------------------------------
// Text format: "spd <n>" then n rows of n values printed with 17 significant
// digits.

inline void write_spd(std::ostream& out, const Matrix& m) {
  out << "spd " << m.rows() << '\n';
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << m(i, j);
    }
    out << '\n';
  }
  out.flags(old_flags);
  out.precision(old_precision);
}

inline Matrix read_spd(std::istream& in) {
  std::string tag;
  long n = 0;
  if (!(in >> tag >> n) || tag != "spd" || n < 1) {
    throw Error(ErrorKind::Format, "expected 'spd <n>' header");
  }
  Matrix m(n, n);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      if (!(in >> m(i, j))) throw Error(ErrorKind::Format, "truncated spd matrix");
    }
  }
  return m;
}

inline std::string to_spd_text(const Matrix& m) {
  std::ostringstream out;
  write_spd(out, m);
  return out.str();
}

}  // namespace wbc::cov
