#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/oracles.hpp"
#include "wbc/pipeline.hpp"
#include "wbc/synthetic.hpp"

namespace wbc::pipeline {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wbc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << "x";
}

// --- config -----------------------------------------------------------------

TEST(Config, DefaultsAndParsing) {
  const PipelineConfig d;
  EXPECT_EQ(d.features.size(), 9u);
  EXPECT_EQ(d.morph_radius, 2);
  EXPECT_EQ(d.min_area, 200);
  EXPECT_EQ(d.gamma, 0.1);
  EXPECT_EQ(d.split_ratio, 0.7);
  EXPECT_EQ(d.seed, 42u);

  std::istringstream in(
      "# comment\n\nfeatures = x, y, grad\nclassifier = mdrm  # inline\nregion=bbox\nseed = 7\n"
      "gamma = 0.25\nintensity = a\n");
  const auto c = parse_config(in);
  ASSERT_EQ(c.features.size(), 3u);
  EXPECT_EQ(c.features[2], cov::Feature::GradMag);
  EXPECT_EQ(c.classifier, ClassifierKind::Mdrm);
  EXPECT_EQ(c.region, RegionMode::BoundingBox);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.gamma, 0.25);
  EXPECT_EQ(c.intensity, IntensityChannel::A);
}

TEST(Config, RejectsBadInput) {
  for (const char* text : {"bogus = 1\n", "gamma = 2\n", "features = x\n", "features = x,q\n",
                           "no equals sign\n", "morph_radius = two\n", "classifier = svm\n"}) {
    std::istringstream in(text);
    try {
      parse_config(in);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Usage) << text;
    }
  }
}

// --- dataset layout and split -----------------------------------------------

TEST(Dataset, ManifestIsSorted) {
  const auto root = scratch("manifest");
  for (const char* f : {"zeta/b.ppm", "zeta/a.png", "alpha/c.ppm", "alpha/notes.txt"}) touch(root / f);
  const auto m = scan_dataset(root);
  ASSERT_EQ(m.classes, (std::vector<std::string>{"alpha", "zeta"}));
  ASSERT_EQ(m.files[0].size(), 1u);
  EXPECT_EQ(m.files[1][0].filename(), "a.png");
  EXPECT_EQ(m.size(), 3u);
  touch(root / "empty" / "readme.md");
  try {
    scan_dataset(root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyClass);
  }
  fs::remove_all(root);
}

TEST(Split, TrainCountRounding) {
  EXPECT_EQ(train_count(10, 0.7), 7u);
  EXPECT_EQ(train_count(5, 0.7), 4u);   // 3.5 rounds up
  EXPECT_EQ(train_count(2, 0.99), 1u);
  EXPECT_EQ(train_count(3, 0.01), 1u);
  EXPECT_EQ(train_count(1, 0.7), 1u);
}

TEST(Split, StratifiedAndDeterministic) {
  DatasetManifest m{"root", {"a", "b", "c"}, {}};
  for (int c = 0; c < 3; ++c) {
    std::vector<fs::path> files;
    for (int i = 0; i < 10 + 7 * c; ++i) files.push_back("f" + std::to_string(c) + "_" + std::to_string(i));
    m.files.push_back(files);
  }
  const auto s1 = stratified_split(m, 0.7, 42);
  const auto s2 = stratified_split(m, 0.7, 42);
  const auto s3 = stratified_split(m, 0.7, 43);
  auto paths = [](const std::vector<DatasetEntry>& v) {
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(e.path.string());
    return out;
  };
  EXPECT_EQ(paths(s1.train), paths(s2.train));
  EXPECT_NE(paths(s1.train), paths(s3.train));
  std::array<int, 3> train{}, test{};
  for (const auto& e : s1.train) ++train[e.label];
  for (const auto& e : s1.test) ++test[e.label];
  EXPECT_EQ(train, (std::array<int, 3>{7, 12, 17}));
  EXPECT_EQ(test, (std::array<int, 3>{3, 5, 7}));
  auto all = paths(s1.train);
  for (const auto& p : paths(s1.test)) {
    EXPECT_EQ(std::count(all.begin(), all.end(), p), 0);
  }
}

// --- image I/O --------------------------------------------------------------

TEST(Ppm, RoundTripAndErrors) {
  RasterImage img(3, 2);
  for (int i = 0; i < 6; ++i) img.values()[i] = {std::uint8_t(i), std::uint8_t(40 * i), 255};
  std::stringstream buf;
  write_ppm(buf, img);
  EXPECT_EQ(read_ppm(buf), img);

  std::istringstream commented("P6\n# made by hand\n1 1\n255\n\x01\x02\x03");
  EXPECT_EQ(read_ppm(commented)(0, 0), (Rgb{1, 2, 3}));
  for (const char* bad : {"P5\n1 1\n255\n\x01", "P6\n2 2\n255\n\x01\x02", "P6\n1 1\n65535\n"}) {
    std::istringstream in(bad);
    try {
      read_ppm(in);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Format);
    }
  }
  EXPECT_THROW(load_image("/nonexistent/x.ppm"), Error);
}

// --- segmentation on a rendered cell ----------------------------------------

TEST(Segment, RecoversNucleus) {
  Rng rng(2024);
  for (int label = 0; label < 5; ++label) {
    const auto cell = synth::render_cell(label, rng);
    const auto seg = segment(cell.image, PipelineConfig{});
    EXPECT_FALSE(seg.fallback);
    EXPECT_GE(testing::iou(seg.mask, cell.truth), 0.85) << "class " << label;
    const auto d = describe_image(cell.image, PipelineConfig{});
    EXPECT_EQ(d.rows(), 9);
  }
}

TEST(Describe, BoundingBoxModeMatchesCropOfFullImage) {
  Rng rng(3);
  const auto cell = synth::render_cell(1, rng);
  PipelineConfig config;
  config.region = RegionMode::BoundingBox;
  const auto seg = segment(cell.image, config);
  const auto& roi = seg.rois.front();
  const auto full = cov::feature_map(seg.lab.l, config.features);
  const spd::Matrix expected =
      cov::region_covariance(full, preprocess::Roi::rectangle(roi.x0, roi.y0, roi.x1, roi.y1));
  const spd::Matrix got = describe_region(seg.lab.l, roi, config);
  EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-9 * expected.cwiseAbs().maxCoeff());
}

// --- command line -----------------------------------------------------------

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(WBC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("cli");
    ASSERT_EQ(run("synth " + (dir_ / "data").string() + " --per-class 4 --seed 5", dir_ / "synth.log"), 0)
        << slurp(dir_ / "synth.log");
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string data() { return (dir_ / "data").string(); }
  static fs::path path(const std::string& name) { return dir_ / name; }

  static inline fs::path dir_;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("", path("a.log")), 1);
  EXPECT_EQ(run("frobnicate", path("a.log")), 1);
  EXPECT_EQ(run("train " + data() + " --model x --set bogus=1", path("a.log")), 1);
  EXPECT_EQ(run("--help", path("a.log")), 0);
}

TEST_F(Cli, SegmentWritesMask) {
  const std::string img = data() + "/basophil/img_0000.ppm";
  ASSERT_EQ(run("segment " + img + " " + path("mask.ppm").string(), path("seg.log")), 0)
      << slurp(path("seg.log"));
  EXPECT_NE(slurp(path("seg.log")).find("rois: 1"), std::string::npos);
  const auto mask = read_ppm_file(path("mask.ppm").string());
  EXPECT_EQ(mask.width(), 720);

  write_ppm_file(path("blank.ppm").string(), RasterImage(50, 40, Rgb{128, 128, 128}));
  EXPECT_EQ(run("segment " + path("blank.ppm").string() + " " + path("m2.ppm").string(), path("b.log")), 2);
  EXPECT_EQ(run("segment /nonexistent.ppm " + path("m3.ppm").string(), path("c.log")), 2);
}

TEST_F(Cli, TrainIsDeterministicAndEvalWritesCsv) {
  ASSERT_EQ(run("train " + data() + " --model " + path("m1.txt").string(), path("t1.log")), 0)
      << slurp(path("t1.log"));
  ASSERT_EQ(run("train " + data() + " --model " + path("m2.txt").string(), path("t2.log")), 0);
  EXPECT_EQ(slurp(path("m1.txt")), slurp(path("m2.txt")));
  EXPECT_EQ(slurp(path("m1.txt")).rfind("tslda-model v1", 0), 0u);

  ASSERT_EQ(run("eval " + data() + " --model " + path("m1.txt").string() + " --csv " +
                    path("cm.csv").string(),
                path("e.log")),
            0)
      << slurp(path("e.log"));
  EXPECT_NE(slurp(path("e.log")).find("Overall accuracy:"), std::string::npos);
  std::istringstream csv(slurp(path("cm.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "true_class,basophil,eosinophil,lymphocyte,monocyte,neutrophil");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    int sum = 0;
    while (std::getline(ss, cell, ',')) sum += std::stoi(cell);
    EXPECT_EQ(sum, 1) << line;  // 4 per class, 3 train / 1 test
    ++rows;
  }
  EXPECT_EQ(rows, 5);

  const std::string img = data() + "/monocyte/img_0003.ppm";
  ASSERT_EQ(run("predict " + img + " --model " + path("m1.txt").string(), path("p.log")), 0);
  const std::string out = slurp(path("p.log"));
  EXPECT_EQ(out.rfind("predicted: ", 0), 0u);
  EXPECT_NE(out.find("discriminant scores"), std::string::npos);

  // a model trained on nine features cannot score eight-feature descriptors
  EXPECT_EQ(run("eval " + data() + " --model " + path("m1.txt").string() +
                    " --set features=x,y,ix,iy,grad,ixx,ixy,iyy",
                path("d.log")),
            3);
}

TEST_F(Cli, MdrmModelAndPredictOutput) {
  ASSERT_EQ(run("train " + data() + " --set classifier=mdrm --model " + path("md.txt").string(),
                path("t.log")),
            0);
  EXPECT_EQ(slurp(path("md.txt")).rfind("mdrm-model v1", 0), 0u);
  ASSERT_EQ(run("predict " + data() + "/basophil/img_0001.ppm --model " + path("md.txt").string(),
                path("p.log")),
            0);
  EXPECT_NE(slurp(path("p.log")).find("riemannian distances"), std::string::npos);
}

TEST_F(Cli, UnshrunkScatterOnTinySetIsNumericError) {
  EXPECT_EQ(run("train " + data() + " --set gamma=0 --model " + path("g0.txt").string(), path("g.log")), 3)
      << slurp(path("g.log"));
  EXPECT_EQ(run("eval " + data() + " --model " + path("missing.txt").string(), path("m.log")), 2);
}

}  // namespace
}  // namespace wbc::pipeline
