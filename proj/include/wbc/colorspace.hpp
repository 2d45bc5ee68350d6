#pragma once

#include <cmath>

#include "wbc/image.hpp"

namespace wbc::color {

struct XyzTriple {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// Reference white used by the XYZ -> Lab step (D65, Y normalized to 100).
inline constexpr XyzTriple kReferenceWhite{95.047, 100.0, 108.883};

/// Inputs are unit-scaled channels in [0, 1]; they are taken to [0, 100]
/// before applying the CIE-RGB matrix so that Y shares the reference white's
/// scale. Every row of the matrix sums to one.
inline XyzTriple rgb_to_xyz(double r, double g, double b) {
  constexpr double kScale = 100.0 / 0.17697;
  return {kScale * (0.49 * r + 0.31 * g + 0.2 * b),
          kScale * (0.17697 * r + 0.8124 * g + 0.01063 * b),
          kScale * (0.0 * r + 0.01 * g + 0.99 * b)};
}

inline double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  constexpr double kThreshold = kDelta * kDelta * kDelta;
  if (t > kThreshold) return std::cbrt(t);
  return t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

inline Lab xyz_to_lab(const XyzTriple& xyz) {
  const double fx = lab_f(xyz.x / kReferenceWhite.x);
  const double fy = lab_f(xyz.y / kReferenceWhite.y);
  const double fz = lab_f(xyz.z / kReferenceWhite.z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline Lab rgb8_to_lab(const Rgb& px) {
  return xyz_to_lab(rgb_to_xyz(px.r / 255.0, px.g / 255.0, px.b / 255.0));
}

struct LabPlanes {
  ScalarPlane l;
  ScalarPlane a;
  ScalarPlane b;
};

inline LabPlanes extract_lab_channels(const RasterImage& image) {
  LabPlanes out{ScalarPlane(image.width(), image.height()),
                ScalarPlane(image.width(), image.height()),
                ScalarPlane(image.width(), image.height())};
  const auto src = image.values();
  auto l = out.l.values();
  auto a = out.a.values();
  auto b = out.b.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Lab lab = rgb8_to_lab(src[i]);
    l[i] = lab.l;
    a[i] = lab.a;
    b[i] = lab.b;
  }
  return out;
}

}  // namespace wbc::color
