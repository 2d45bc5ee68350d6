#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "support/oracles.hpp"
#include "wbc/preprocess.hpp"

namespace wbc::preprocess {
namespace {

using testing::component_boxes_oracle;
using testing::dilate_oracle;
using testing::erode_oracle;
using testing::random_blobs;

ByteImage bytes(int w, int h, std::vector<std::uint8_t> v) { return ByteImage(w, h, std::move(v)); }

LabelMask square_mask(int w, int h, int x0, int y0, int side) {
  LabelMask m(w, h);
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) m(x, y) = 1;
  }
  return m;
}

long foreground(const LabelMask& m) {
  return std::count_if(m.values().begin(), m.values().end(), [](auto v) { return v != 0; });
}

bool subset(const LabelMask& a, const LabelMask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] && !b.values()[i]) return false;
  }
  return true;
}

// --- quantize / equalize ----------------------------------------------------

TEST(QuantizePlane, ConstantMapsToZero) {
  const auto q = quantize_plane(ScalarPlane(3, 2, 5.0));
  for (auto v : q.values()) EXPECT_EQ(v, 0);
}

TEST(QuantizePlane, EndpointsAndHalfUp) {
  EXPECT_EQ(quantize_plane(ScalarPlane(2, 1, {0.0, 1.0})), bytes(2, 1, {0, 255}));
  EXPECT_EQ(quantize_plane(ScalarPlane(3, 1, {0.0, 0.5, 1.0})), bytes(3, 1, {0, 128, 255}));
}

TEST(HistEqualize, ConstantUnchanged) {
  const ByteImage img(4, 4, std::uint8_t{77});
  EXPECT_EQ(hist_equalize(img), img);
}

TEST(HistEqualize, UniformHistogramIsFixedPoint) {
  std::vector<std::uint8_t> ramp(256);
  for (int i = 0; i < 256; ++i) ramp[i] = static_cast<std::uint8_t>(i);
  const ByteImage img(256, 1, ramp);
  const ByteImage once = hist_equalize(img);
  EXPECT_EQ(once, img);
  EXPECT_EQ(hist_equalize(once), once);
}

TEST(HistEqualize, TwoLevelsGoToExtremes) {
  std::vector<std::uint8_t> v(100, 10);
  std::fill(v.begin() + 50, v.end(), 200);
  const auto out = hist_equalize(ByteImage(10, 10, v));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(out.values()[i], i < 50 ? 0 : 255);
}

TEST(HistEqualize, Monotone) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ByteImage img(32, 32);
    for (auto& v : img.values()) v = static_cast<std::uint8_t>(std::clamp(rng.normal(120, 30), 0.0, 255.0));
    const auto out = hist_equalize(img);
    for (std::size_t i = 0; i < img.size(); ++i) {
      for (std::size_t j = 0; j < img.size(); j += 37) {
        if (img.values()[i] <= img.values()[j]) {
          EXPECT_LE(out.values()[i], out.values()[j]);
        }
      }
    }
  }
}

// --- mixture fit ------------------------------------------------------------

ByteImage three_gaussians(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> v;
  for (const double mu : {30.0, 128.0, 220.0}) {
    for (int i = 0; i < 1200; ++i) {
      v.push_back(static_cast<std::uint8_t>(std::clamp(std::round(rng.normal(mu, 5.0)), 0.0, 255.0)));
    }
  }
  return ByteImage(60, 60, v);
}

TEST(FitGmm3, RecoversSeparatedGaussians) {
  const auto fit = fit_gmm3(three_gaussians(42));
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.mixture.means[0], 30.0, 3.0);
  EXPECT_NEAR(fit.mixture.means[1], 128.0, 3.0);
  EXPECT_NEAR(fit.mixture.means[2], 220.0, 3.0);
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    EXPECT_GT(fit.mixture.variances[k], 0.0);
    EXPECT_NEAR(std::sqrt(fit.mixture.variances[k]), 5.0, 1.0);
    total += fit.mixture.weights[k];
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(FitGmm3, PointMassesCollapseToVarianceFloor) {
  std::vector<std::uint8_t> v;
  for (const std::uint8_t level : {10, 100, 240}) v.insert(v.end(), 300, level);
  const auto fit = fit_gmm3(ByteImage(30, 30, v));
  EXPECT_NEAR(fit.mixture.means[0], 10.0, 1.0);
  EXPECT_NEAR(fit.mixture.means[1], 100.0, 1.0);
  EXPECT_NEAR(fit.mixture.means[2], 240.0, 1.0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(fit.mixture.variances[k], kVarianceFloor, 1e-9);
}

TEST(FitGmm3, InfiniteToleranceReturnsInitialization) {
  const ByteImage img = three_gaussians(5);
  const auto fit = fit_gmm3(img, 100, std::numeric_limits<double>::infinity());
  EXPECT_EQ(fit.iterations, 0);
  EXPECT_EQ(fit.log_likelihood.size(), 1u);

  std::vector<std::uint8_t> sorted(img.values().begin(), img.values().end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  EXPECT_EQ(fit.mixture.means[0], sorted[static_cast<std::size_t>(0.25 * (n - 1))]);
  EXPECT_EQ(fit.mixture.means[1], sorted[static_cast<std::size_t>(0.5 * (n - 1))]);
  EXPECT_EQ(fit.mixture.means[2], sorted[static_cast<std::size_t>(0.75 * (n - 1))]);
  double mean = 0.0, var = 0.0;
  for (auto v : sorted) mean += v;
  mean /= n;
  for (auto v : sorted) var += (v - mean) * (v - mean);
  var /= n;
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(fit.mixture.weights[k], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(fit.mixture.variances[k], var, 1e-9 * var);
  }
}

TEST(FitGmm3, FewerThanThreeLevelsIsDegenerate) {
  std::vector<std::uint8_t> v(50, 3);
  std::fill(v.begin(), v.begin() + 10, 90);
  try {
    fit_gmm3(ByteImage(10, 5, v));
    FAIL() << "expected DegenerateInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateInput);
  }
}

TEST(FitGmm3, LogLikelihoodNonDecreasing) {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    ByteImage img(40, 40);
    for (auto& v : img.values()) {
      const double mu = std::array{40.0, 110.0, 190.0}[rng.below(3)];
      v = static_cast<std::uint8_t>(std::clamp(rng.normal(mu, 20.0), 0.0, 255.0));
    }
    const auto fit = fit_gmm3(img, 100, 0.0);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
      EXPECT_GE(fit.log_likelihood[i], fit.log_likelihood[i - 1] - 1e-9);
    }
  }
}

TEST(FitGmm3, DominantLevelStillSeparatesClusters) {
  // 90% of pixels share one level, pinning all three percentiles to it
  std::vector<std::uint8_t> v(1000, 0);
  std::fill(v.begin() + 900, v.begin() + 950, 140);
  std::fill(v.begin() + 950, v.end(), 250);
  const auto fit = fit_gmm3(ByteImage(40, 25, v));
  EXPECT_NEAR(fit.mixture.means[0], 0.0, 1.0);
  EXPECT_NEAR(fit.mixture.means[1], 140.0, 1.0);
  EXPECT_NEAR(fit.mixture.means[2], 250.0, 1.0);
}

TEST(FitGmm3, MaxItersExhaustionIsFlaggedNotThrown) {
  const auto fit = fit_gmm3(three_gaussians(8), 1, 0.0);
  EXPECT_EQ(fit.iterations, 1);
  EXPECT_FALSE(fit.converged);
}

// --- pixel classification ---------------------------------------------------

GaussianMixture1D mixture(std::array<double, 3> means, std::array<double, 3> vars,
                          std::array<double, 3> weights) {
  return {means, vars, weights};
}

TEST(ClassifyPixels, OwnMeanWins) {
  const auto gmm = mixture({30, 128, 220}, {25, 25, 25}, {0.3, 0.3, 0.4});
  const auto labels = classify_pixels(ByteImage(1, 1, std::uint8_t{220}), gmm);
  EXPECT_EQ(labels(0, 0), 2);
}

TEST(ClassifyPixels, MidpointTieGoesToSmallerIndex) {
  const auto gmm = mixture({100, 110, 250}, {16, 16, 16}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto labels = classify_pixels(ByteImage(1, 1, std::uint8_t{105}), gmm);
  EXPECT_EQ(labels(0, 0), 0);
}

TEST(ClassifyPixels, MatchesPosteriorOracle) {
  Rng rng(4);
  const auto gmm = mixture({40, 120, 200}, {90, 400, 150}, {0.2, 0.5, 0.3});
  ByteImage img(32, 32);
  for (auto& v : img.values()) v = static_cast<std::uint8_t>(rng.below(256));
  const auto labels = classify_pixels(img, gmm);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img.values()[i];
    int best = 0;
    double best_p = -1.0;
    for (int k = 0; k < 3; ++k) {
      const double p = gmm.weights[k] / std::sqrt(2 * std::numbers::pi * gmm.variances[k]) *
                       std::exp(-(v - gmm.means[k]) * (v - gmm.means[k]) / (2 * gmm.variances[k]));
      if (p > best_p) {
        best_p = p;
        best = k;
      }
    }
    EXPECT_EQ(labels.values()[i], best) << "value " << v;
    EXPECT_LE(labels.values()[i], 2);
  }
}

TEST(SelectForeground, Polarity) {
  const auto gmm = mixture({30, 128, 220}, {1, 1, 1}, {0.3, 0.3, 0.4});
  const LabelMask labels(3, 1, {0, 1, 2});
  EXPECT_EQ(select_foreground(labels, gmm, Polarity::Highest), LabelMask(3, 1, {0, 0, 1}));
  EXPECT_EQ(select_foreground(labels, gmm, Polarity::Lowest), LabelMask(3, 1, {1, 0, 0}));
  const LabelMask all_one(2, 2, std::uint8_t{2});
  EXPECT_EQ(select_foreground(all_one, gmm), LabelMask(2, 2, std::uint8_t{1}));
}

// --- morphology -------------------------------------------------------------

TEST(MorphOpen, IsolatedPixelRemoved) {
  LabelMask m(9, 9);
  m(4, 4) = 1;
  EXPECT_EQ(foreground(morph_open(m, 1)), 0);
}

TEST(MorphOpen, SquareLosesOnlyCornerPixels) {
  // the radius-2 disk cannot reach the corner pixel or its two edge
  // neighbours, so each corner drops three pixels
  const auto m = square_mask(40, 40, 10, 10, 20);
  const auto opened = morph_open(m, 2);
  EXPECT_EQ(opened, dilate_oracle(erode_oracle(m, 2), 2));
  EXPECT_EQ(foreground(opened), 400 - 4 * 3);
  EXPECT_EQ(opened(10, 10), 0);
  EXPECT_EQ(opened(11, 10), 0);
  EXPECT_EQ(opened(12, 10), 1);
  EXPECT_EQ(opened(11, 11), 1);
  EXPECT_TRUE(subset(opened, m));
}

TEST(MorphOpen, RadiusZeroIsIdentity) {
  Rng rng(1);
  const auto m = random_blobs(rng, 16, 16, 0.5);
  EXPECT_EQ(morph_open(m, 0), m);
}

TEST(MorphOpen, MatchesSetDefinition) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_blobs(rng, 32, 32, 0.6);
    for (int r : {1, 2, 3}) {
      EXPECT_EQ(erode(m, r), erode_oracle(m, r));
      EXPECT_EQ(dilate(m, r), dilate_oracle(m, r));
      EXPECT_EQ(morph_open(m, r), dilate_oracle(erode_oracle(m, r), r));
      EXPECT_TRUE(subset(morph_open(m, r), m));
    }
  }
}

// --- components -------------------------------------------------------------

TEST(RemoveSmallComponents, KeepsOnlyLargeOnes) {
  LabelMask m(60, 60);
  for (int i = 0; i < 10; ++i) m(i, 0) = 1;                 // area 10
  for (int y = 20; y < 40; ++y) {
    for (int x = 20; x < 45; ++x) m(x, y) = 1;               // area 500
  }
  const auto out = remove_small_components(m, 200);
  EXPECT_EQ(foreground(out), 500);
  EXPECT_EQ(out(0, 0), 0);
  EXPECT_EQ(remove_small_components(m, 0), m);
  EXPECT_EQ(foreground(remove_small_components(m, 60 * 60 + 1)), 0);
}

TEST(RemoveSmallComponents, NeverAddsPixels) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_blobs(rng, 30, 30, 0.4);
    EXPECT_TRUE(subset(remove_small_components(m, 5), m));
  }
}

TEST(FillHoles, RingBecomesDisk) {
  LabelMask ring(14, 14);
  for (int i = 2; i < 12; ++i) {
    ring(i, 2) = ring(i, 11) = ring(2, i) = ring(11, i) = 1;
  }
  EXPECT_EQ(fill_holes(ring), square_mask(14, 14, 2, 2, 10));
}

TEST(FillHoles, SolidAndEmptyUnchanged) {
  const auto solid = square_mask(10, 10, 3, 3, 4);
  EXPECT_EQ(fill_holes(solid), solid);
  const LabelMask empty(6, 6);
  EXPECT_EQ(fill_holes(empty), empty);
}

TEST(FillHoles, DiagonalGapDoesNotLeak) {
  // background escapes only through 4-connected paths
  LabelMask m(5, 5);
  m(1, 2) = m(2, 1) = m(3, 2) = m(2, 3) = 1;
  EXPECT_EQ(fill_holes(m)(2, 2), 1);
}

TEST(FillHoles, NeverRemovesPixels) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_blobs(rng, 30, 30, 0.5);
    EXPECT_TRUE(subset(m, fill_holes(m)));
  }
}

TEST(ExtractRois, LargestComponentOnly) {
  auto m = square_mask(80, 80, 5, 5, 30);
  for (int y = 50; y < 60; ++y) {
    for (int x = 50; x < 60; ++x) m(x, y) = 1;
  }
  const auto rois = extract_rois(m, 50);
  ASSERT_EQ(rois.size(), 2u);
  EXPECT_EQ(rois[0].area, 900);
  EXPECT_EQ(rois[0].x0, 5);
  EXPECT_EQ(rois[0].x1, 34);
  const auto big_only = extract_rois(m, 150);
  ASSERT_EQ(big_only.size(), 1u);
  EXPECT_EQ(big_only[0].area, 900);
  EXPECT_EQ(big_only[0].y1, 34);
}

TEST(ExtractRois, EmptyMaskFallsBackToFullImage) {
  const auto rois = extract_rois(LabelMask(12, 7), 1);
  ASSERT_EQ(rois.size(), 1u);
  EXPECT_EQ(rois[0].x0, 0);
  EXPECT_EQ(rois[0].y0, 0);
  EXPECT_EQ(rois[0].x1, 11);
  EXPECT_EQ(rois[0].y1, 6);
  EXPECT_EQ(rois[0].area, 84);
}

TEST(ExtractRois, MatchesFloodFillOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_blobs(rng, 40, 30, 0.35);
    const auto rois = extract_rois(m, 1);
    auto boxes = component_boxes_oracle(m);
    std::stable_sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) {
      if (a.area != b.area) return a.area > b.area;
      if (a.y0 != b.y0) return a.y0 < b.y0;
      return a.x0 < b.x0;
    });
    ASSERT_EQ(rois.size(), boxes.size());
    long total = 0;
    for (std::size_t i = 0; i < rois.size(); ++i) {
      EXPECT_EQ(rois[i].area, boxes[i].area);
      EXPECT_EQ(rois[i].x0, boxes[i].x0);
      EXPECT_EQ(rois[i].y0, boxes[i].y0);
      EXPECT_EQ(rois[i].x1, boxes[i].x1);
      EXPECT_EQ(rois[i].y1, boxes[i].y1);
      EXPECT_LE(rois[i].area, rois[i].box_area());
      total += rois[i].area;
    }
    EXPECT_EQ(total, foreground(m));
  }
}

}  // namespace
}  // namespace wbc::preprocess
