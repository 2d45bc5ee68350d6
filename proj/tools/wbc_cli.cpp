// wbc: segment, describe, train, evaluate and predict white-blood-cell images
// with covariance descriptors and Riemannian classifiers.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wbc/classify.hpp"
#include "wbc/covdesc.hpp"
#include "wbc/error.hpp"
#include "wbc/pipeline.hpp"
#include "wbc/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using wbc::Error;
using wbc::ErrorKind;
using wbc::pipeline::PipelineConfig;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return kExitUsage;
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::SingularScatter:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::NonSymmetric: return kExitNumeric;
    default: return kExitData;
  }
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Pipeline config file (key = value lines)");
    cmd->add_option("--seed", seed, "Random seed (overrides the config)");
    cmd->add_option("--set", overrides, "Override a config key, e.g. --set gamma=0.2");
  }

  PipelineConfig load() const {
    PipelineConfig config =
        config_path.empty() ? PipelineConfig{} : wbc::pipeline::load_config(config_path);
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::Usage, "--set expects key=value");
      wbc::pipeline::apply_setting(config, item.substr(0, eq), item.substr(eq + 1));
    }
    if (seed) config.seed = *seed;
    config.validate();
    return config;
  }
};

void check_compatible(const wbc::classify::AnyModel& model, const PipelineConfig& config,
                      const std::vector<std::string>* classes) {
  const int n = static_cast<int>(config.features.size());
  if (model.dimension() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "model descriptor size " + std::to_string(model.dimension()) +
                    " differs from the configured feature count " + std::to_string(n));
  }
  if (classes && *classes != model.class_names()) {
    throw Error(ErrorKind::Format, "dataset classes differ from the model's class list");
  }
}

int run_segment(const std::string& input, const std::string& output, const PipelineConfig& config) {
  const auto image = wbc::pipeline::load_image(input);
  const auto seg = wbc::pipeline::segment(image, config);
  wbc::pipeline::save_image(output, wbc::mask_to_raster(seg.mask));
  if (seg.fallback) {
    std::cout << "rois: 0 (no foreground; full-image fallback)\n";
  } else {
    std::cout << "rois: " << seg.rois.size() << '\n';
    for (const auto& roi : seg.rois) {
      std::cout << "  area " << roi.area << " box " << roi.x0 << ',' << roi.y0 << ' ' << roi.x1
                << ',' << roi.y1 << '\n';
    }
  }
  return kExitOk;
}

int run_describe(const std::string& input, const std::string& output, const PipelineConfig& config) {
  const auto descriptor = wbc::pipeline::describe_image(wbc::pipeline::load_image(input), config);
  if (output.empty()) {
    wbc::cov::write_spd(std::cout, descriptor);
  } else {
    std::ofstream out(output);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + output);
    wbc::cov::write_spd(out, descriptor);
  }
  return kExitOk;
}

int run_train(const std::string& root, const std::string& model_path, const PipelineConfig& config) {
  const auto manifest = wbc::pipeline::scan_dataset(root);
  const auto split = wbc::pipeline::stratified_split(manifest, config.split_ratio, config.seed);
  const auto samples = wbc::pipeline::describe_entries(split.train, config);
  const auto model = wbc::pipeline::train_model(samples, manifest.classes, config);
  wbc::classify::write_model_file(model_path, model);

  std::vector<int> per_class(manifest.classes.size(), 0);
  for (const auto& entry : split.train) ++per_class[entry.label];
  std::cout << "trained " << (model.kind == wbc::classify::AnyModel::Kind::Mdrm ? "mdrm" : "tslda")
            << " on " << samples.size() << " images\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    std::cout << "  " << manifest.classes[c] << ": " << per_class[c] << '\n';
  }
  std::cout << "model written to " << model_path << '\n';
  return kExitOk;
}

int run_eval(const std::string& root, const std::string& model_path, std::string csv_path,
             const PipelineConfig& config) {
  const auto model = wbc::classify::read_model_file(model_path);
  const auto manifest = wbc::pipeline::scan_dataset(root);
  check_compatible(model, config, &manifest.classes);
  const auto split = wbc::pipeline::stratified_split(manifest, config.split_ratio, config.seed);
  const auto samples = wbc::pipeline::describe_entries(split.test, config);
  const auto cm = wbc::classify::evaluate(model, samples);
  if (csv_path.empty()) csv_path = model_path + ".confusion.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorKind::Io, "cannot write " + csv_path);
  csv << wbc::classify::to_csv(cm);
  std::cout << wbc::classify::format_table(cm);
  std::cout << "confusion CSV written to " << csv_path << '\n';
  return kExitOk;
}

int run_predict(const std::string& input, const std::string& model_path, const PipelineConfig& config) {
  const auto model = wbc::classify::read_model_file(model_path);
  check_compatible(model, config, nullptr);
  const auto descriptor = wbc::pipeline::describe_image(wbc::pipeline::load_image(input), config);
  const bool mdrm = model.kind == wbc::classify::AnyModel::Kind::Mdrm;
  const auto values = mdrm ? wbc::classify::mdrm_distances(model.mdrm, descriptor)
                           : wbc::classify::tslda_scores(model.tslda, descriptor);
  const int predicted = wbc::classify::predict(model, descriptor);
  const auto& names = model.class_names();
  std::cout << "predicted: " << names[predicted] << '\n';
  std::cout << (mdrm ? "riemannian distances:\n" : "discriminant scores:\n");
  for (std::size_t c = 0; c < values.size(); ++c) {
    std::printf("  %s %.6f\n", names[c].c_str(), values[c]);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"White-blood-cell classification with covariance descriptors"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string input, output, root, model_path, csv_path;
  int per_class = 40;

  auto* segment = app.add_subcommand("segment", "Segment an image and write the binary mask");
  segment->add_option("image", input, "Input image (.ppm or .png)")->required();
  segment->add_option("mask", output, "Output mask image (.ppm or .png)")->required();
  common.add_to(segment);

  auto* describe = app.add_subcommand("describe", "Print the covariance descriptor of an image");
  describe->add_option("image", input, "Input image")->required();
  describe->add_option("-o,--output", output, "Write the descriptor here instead of stdout");
  common.add_to(describe);

  auto* train = app.add_subcommand("train", "Train a classifier on the training split");
  train->add_option("dataset", root, "Dataset root (one directory per class)")->required();
  train->add_option("--model", model_path, "Model output path")->required();
  common.add_to(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a model on the held-out split");
  eval->add_option("dataset", root, "Dataset root")->required();
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--csv", csv_path, "Confusion CSV path (default <model>.confusion.csv)");
  common.add_to(eval);

  auto* predict = app.add_subcommand("predict", "Classify a single image");
  predict->add_option("image", input, "Input image")->required();
  predict->add_option("--model", model_path, "Model file")->required();
  common.add_to(predict);

  auto* synth = app.add_subcommand("synth", "Write a synthetic five-class cell dataset");
  synth->add_option("dataset", root, "Output root")->required();
  synth->add_option("--per-class", per_class, "Images per class")->check(CLI::PositiveNumber);
  common.add_to(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const PipelineConfig config = common.load();
    if (segment->parsed()) return run_segment(input, output, config);
    if (describe->parsed()) return run_describe(input, output, config);
    if (train->parsed()) return run_train(root, model_path, config);
    if (eval->parsed()) return run_eval(root, model_path, csv_path, config);
    if (predict->parsed()) return run_predict(input, model_path, config);
    if (synth->parsed()) {
      const int n = wbc::synth::write_cell_dataset(root, per_class, config.seed);
      std::cout << "wrote " << n << " images to " << root << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
