#pragma once

// End-to-end pipeline: configuration, dataset layout, stratified splitting,
// segmentation and descriptor extraction. The CLI is a thin layer over this.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wbc/classify.hpp"
#include "wbc/colorspace.hpp"
#include "wbc/covdesc.hpp"
#include "wbc/error.hpp"
#include "wbc/image.hpp"
#include "wbc/preprocess.hpp"
#include "wbc/random.hpp"
#include "wbc/spdgeom.hpp"

#ifdef WBC_HAVE_PNG
#include "wbc/png_io.hpp"
#endif

namespace wbc::pipeline {

namespace fs = std::filesystem;

enum class ClassifierKind { Tslda, Mdrm };
/// Mask: covariance over the component's own pixels. BoundingBox: over the
/// component's bounding rectangle through integral images.
enum class RegionMode { Mask, BoundingBox };
/// Plane the feature image is computed from.
enum class IntensityChannel { Lightness, A };

struct PipelineConfig {
  std::vector<cov::Feature> features = cov::default_features();
  int morph_radius = 2;
  int min_area = 200;
  preprocess::Polarity polarity = preprocess::Polarity::Highest;
  double gmm_tol = 1e-6;
  int gmm_max_iters = 100;
  double mean_eps = 1e-8;
  int mean_max_iters = 50;
  double gamma = 0.1;
  double split_ratio = 0.7;
  std::uint64_t seed = 42;
  ClassifierKind classifier = ClassifierKind::Tslda;
  RegionMode region = RegionMode::Mask;
  IntensityChannel intensity = IntensityChannel::Lightness;

  spd::MeanOptions mean_options() const { return {mean_eps, mean_max_iters}; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::Usage, msg); };
    if (features.size() < 2) fail("features: at least two are required");
    if (morph_radius < 0) fail("morph_radius must be >= 0");
    if (min_area < 0) fail("min_area must be >= 0");
    if (!(gmm_tol >= 0.0)) fail("gmm_tol must be >= 0");
    if (gmm_max_iters < 0) fail("gmm_max_iters must be >= 0");
    if (!(mean_eps > 0.0)) fail("mean_eps must be > 0");
    if (mean_max_iters < 0) fail("mean_max_iters must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::Usage, "config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

inline std::vector<cov::Feature> parse_features(const std::string& text) {
  std::vector<cov::Feature> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto name = trim(item);
    const auto feature = cov::parse_feature(name);
    if (!feature) throw Error(ErrorKind::Usage, "unknown feature '" + name + "'");
    out.push_back(*feature);
  }
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are usage errors.
inline void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value) {
  using detail::parse_number;
  auto choose = [&](std::initializer_list<std::string_view> allowed) {
    for (const auto a : allowed) {
      if (value == a) return;
    }
    throw Error(ErrorKind::Usage, "config key '" + key + "': unsupported value '" + value + "'");
  };
  if (key == "features") {
    config.features = detail::parse_features(value);
  } else if (key == "morph_radius") {
    config.morph_radius = parse_number<int>(key, value);
  } else if (key == "min_area") {
    config.min_area = parse_number<int>(key, value);
  } else if (key == "polarity") {
    choose({"highest", "lowest"});
    config.polarity = value == "highest" ? preprocess::Polarity::Highest : preprocess::Polarity::Lowest;
  } else if (key == "gmm_tol") {
    config.gmm_tol = parse_number<double>(key, value);
  } else if (key == "gmm_max_iters") {
    config.gmm_max_iters = parse_number<int>(key, value);
  } else if (key == "mean_eps") {
    config.mean_eps = parse_number<double>(key, value);
  } else if (key == "mean_max_iters") {
    config.mean_max_iters = parse_number<int>(key, value);
  } else if (key == "gamma") {
    config.gamma = parse_number<double>(key, value);
  } else if (key == "split_ratio") {
    config.split_ratio = parse_number<double>(key, value);
  } else if (key == "seed") {
    config.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "classifier") {
    choose({"tslda", "mdrm"});
    config.classifier = value == "tslda" ? ClassifierKind::Tslda : ClassifierKind::Mdrm;
  } else if (key == "region") {
    choose({"mask", "bbox"});
    config.region = value == "mask" ? RegionMode::Mask : RegionMode::BoundingBox;
  } else if (key == "intensity") {
    choose({"L", "a"});
    config.intensity = value == "L" ? IntensityChannel::Lightness : IntensityChannel::A;
  } else {
    throw Error(ErrorKind::Usage, "unknown config key '" + key + "'");
  }
}

/// `key = value` lines; blank lines and `#` comments are ignored.
inline PipelineConfig parse_config(std::istream& in, PipelineConfig config = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = detail::trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Usage, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(config, detail::trim(content.substr(0, eq)), detail::trim(content.substr(eq + 1)));
  }
  config.validate();
  return config;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Usage, "cannot open config " + path.string());
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Images

inline bool has_extension(const fs::path& path, std::string_view ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

inline bool is_image_path(const fs::path& path) {
  return has_extension(path, ".ppm") || has_extension(path, ".png");
}

inline RasterImage load_image(const fs::path& path) {
  if (has_extension(path, ".png")) {
#ifdef WBC_HAVE_PNG
    return read_png_file(path.string());
#else
    throw Error(ErrorKind::Format, path.string() + ": PNG support not built in");
#endif
  }
  return read_ppm_file(path.string());
}

inline void save_image(const fs::path& path, const RasterImage& image) {
  if (has_extension(path, ".png")) {
#ifdef WBC_HAVE_PNG
    write_png_file(path.string(), image);
    return;
#else
    throw Error(ErrorKind::Format, path.string() + ": PNG support not built in");
#endif
  }
  write_ppm_file(path.string(), image);
}

// ---------------------------------------------------------------------------
// Dataset layout: root/<class name>/<image files>, both levels sorted
// lexicographically by name.

struct DatasetManifest {
  fs::path root;
  std::vector<std::string> classes;
  std::vector<std::vector<fs::path>> files;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& f : files) n += f.size();
    return n;
  }
};

inline DatasetManifest scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::Io, root.string() + " is not a directory");
  DatasetManifest manifest{root, {}, {}};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  for (const auto& dir : dirs) {
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_path(entry.path())) images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end(), [](const fs::path& a, const fs::path& b) {
      return a.filename().string() < b.filename().string();
    });
    if (images.empty()) {
      throw Error(ErrorKind::EmptyClass, "class directory " + dir.string() + " holds no images");
    }
    manifest.classes.push_back(dir.filename().string());
    manifest.files.push_back(std::move(images));
  }
  if (manifest.classes.size() < 2) {
    throw Error(ErrorKind::EmptyClass, root.string() + ": need at least two class directories");
  }
  return manifest;
}

struct DatasetEntry {
  int label = 0;
  fs::path path;
};

struct Split {
  std::vector<DatasetEntry> train;
  std::vector<DatasetEntry> test;
};

/// Number of training items for a class of `count` items: round-half-up of
/// ratio * count, kept within [1, count - 1] so both sides are populated.
inline std::size_t train_count(std::size_t count, double ratio) {
  if (count < 2) return count;
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 0.5));
  return std::clamp<std::size_t>(k, 1, count - 1);
}

/// Stratified split. One Rng (mt19937_64 seeded with `seed`) is shared across
/// classes in manifest order; each class's index list 0..n-1 is Fisher-Yates
/// shuffled (see Rng::shuffle) and its first train_count items go to
/// training. Both sides are then returned in manifest order.
inline Split stratified_split(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
  Rng rng(seed);
  Split split;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    const auto& files = manifest.files[c];
    std::vector<std::size_t> order(files.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t k = train_count(files.size(), ratio);
    std::vector<bool> in_train(files.size(), false);
    for (std::size_t i = 0; i < k; ++i) in_train[order[i]] = true;
    for (std::size_t i = 0; i < files.size(); ++i) {
      auto& side = in_train[i] ? split.train : split.test;
      side.push_back({static_cast<int>(c), files[i]});
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Segmentation and descriptors

struct Segmentation {
  color::LabPlanes lab;
  preprocess::GmmFit gmm;
  /// Cleaned binary foreground mask.
  LabelMask mask;
  /// Largest first; a single full-image ROI when nothing survived cleanup.
  std::vector<preprocess::Roi> rois;
  bool fallback = false;
};

inline Segmentation segment(const RasterImage& image, const PipelineConfig& config) {
  namespace pp = preprocess;
  Segmentation seg;
  seg.lab = color::extract_lab_channels(image);
  const ByteImage equalized = pp::hist_equalize(pp::quantize_plane(seg.lab.a));
  seg.gmm = pp::fit_gmm3(equalized, config.gmm_max_iters, config.gmm_tol);
  LabelMask mask = pp::select_foreground(pp::classify_pixels(equalized, seg.gmm.mixture),
                                         seg.gmm.mixture, config.polarity);
  mask = pp::morph_open(mask, config.morph_radius);
  mask = pp::remove_small_components(mask, config.min_area);
  seg.mask = pp::fill_holes(mask);
  seg.rois = pp::extract_rois(seg.mask, config.min_area);
  seg.fallback = std::none_of(seg.mask.values().begin(), seg.mask.values().end(),
                              [](std::uint8_t v) { return v != 0; });
  return seg;
}

/// Covariance descriptor of one region of an intensity plane. The feature
/// image is computed on the ROI's bounding box plus a one-pixel margin, which
/// yields the same derivatives as the full image inside the box.
inline spd::SpdMatrix describe_region(const ScalarPlane& intensity, const preprocess::Roi& roi,
                                      const PipelineConfig& config) {
  const int x0 = std::max(roi.x0 - 1, 0);
  const int y0 = std::max(roi.y0 - 1, 0);
  const int x1 = std::min(roi.x1 + 1, intensity.width() - 1);
  const int y1 = std::min(roi.y1 + 1, intensity.height() - 1);
  const cov::FeatureStack stack = cov::feature_map(intensity.crop(x0, y0, x1, y1), config.features);
  preprocess::Roi local = roi;
  local.x0 -= x0;
  local.x1 -= x0;
  local.y0 -= y0;
  local.y1 -= y0;
  if (config.region == RegionMode::BoundingBox) return cov::region_covariance_fast(stack, local);
  return cov::region_covariance(stack, local);
}

inline const ScalarPlane& intensity_plane(const Segmentation& seg, const PipelineConfig& config) {
  return config.intensity == IntensityChannel::Lightness ? seg.lab.l : seg.lab.a;
}

inline spd::SpdMatrix describe_image(const RasterImage& image, const PipelineConfig& config) {
  const Segmentation seg = segment(image, config);
  return describe_region(intensity_plane(seg, config), seg.rois.front(), config);
}

/// Descriptors for the given entries, in the given order. Errors name the file.
inline std::vector<classify::LabeledSample> describe_entries(std::span<const DatasetEntry> entries,
                                                             const PipelineConfig& config) {
  std::vector<classify::LabeledSample> samples;
  samples.reserve(entries.size());
  for (const auto& entry : entries) {
    try {
      samples.push_back({describe_image(load_image(entry.path), config), entry.label});
    } catch (const Error& e) {
      throw Error(e.kind(), entry.path.string() + ": " + e.what());
    }
  }
  return samples;
}

inline classify::AnyModel train_model(std::span<const classify::LabeledSample> samples,
                                      const std::vector<std::string>& class_names,
                                      const PipelineConfig& config) {
  std::vector<bool> seen(class_names.size(), false);
  for (const auto& s : samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= class_names.size()) {
      throw Error(ErrorKind::Format, "sample label outside the class list");
    }
    seen[s.label] = true;
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw Error(ErrorKind::EmptyClass, "class '" + class_names[c] + "' has no training samples");
  }
  classify::AnyModel model;
  if (config.classifier == ClassifierKind::Mdrm) {
    model.kind = classify::AnyModel::Kind::Mdrm;
    model.mdrm = classify::mdrm_train(samples, {config.mean_options()});
    model.mdrm.class_names = class_names;
  } else {
    model.kind = classify::AnyModel::Kind::Tslda;
    model.tslda = classify::tslda_train(samples, {config.gamma, config.mean_options()});
    model.tslda.class_names = class_names;
  }
  return model;
}

}  // namespace wbc::pipeline
