#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wbc/covdesc.hpp"
#include "wbc/error.hpp"
#include "wbc/spdgeom.hpp"

namespace wbc::classify {

using spd::Matrix;
using spd::SpdMatrix;
using spd::TangentVector;
using spd::Vector;

struct LabeledSample {
  SpdMatrix descriptor;
  int label = 0;
};

/// Minimum distance to Riemannian mean.
struct MdrmModel {
  int dimension = 0;
  std::vector<std::string> class_names;
  std::vector<SpdMatrix> class_means;

  int class_count() const { return static_cast<int>(class_means.size()); }
};

/// Tangent-space LDA: one-vs-rest Fisher discriminants on the tangent space at
/// the Riemannian mean of the training set.
struct TsldaModel {
  int dimension = 0;
  double gamma = 0.1;
  std::vector<std::string> class_names;
  SpdMatrix reference_mean;
  std::vector<Vector> weights;
  std::vector<double> biases;

  int class_count() const { return static_cast<int>(weights.size()); }
};

namespace detail {

inline std::vector<std::string> default_names(int count) {
  std::vector<std::string> names;
  for (int c = 0; c < count; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

/// Groups descriptors by label, checking every class in [0, C) is populated
/// with at least `min_per_class` samples.
inline std::vector<std::vector<SpdMatrix>> group_by_class(std::span<const LabeledSample> samples,
                                                          int min_per_class) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "no training samples");
  int classes = 0;
  for (const auto& s : samples) {
    if (s.label < 0) throw Error(ErrorKind::Format, "negative class label");
    classes = std::max(classes, s.label + 1);
  }
  if (classes < 2) throw Error(ErrorKind::EmptyClass, "at least two classes are required");
  std::vector<std::vector<SpdMatrix>> groups(classes);
  for (const auto& s : samples) {
    spd::require_same_dimension(samples.front().descriptor, s.descriptor);
    groups[s.label].push_back(s.descriptor);
  }
  for (int c = 0; c < classes; ++c) {
    if (static_cast<int>(groups[c].size()) < min_per_class) {
      throw Error(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has " +
                                             std::to_string(groups[c].size()) +
                                             " samples, needs " + std::to_string(min_per_class));
    }
  }
  return groups;
}

/// Smallest index wins ties.
template <typename Range, typename Better>
int arg_best(const Range& values, Better better) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(values.size()); ++c) {
    if (better(values[c], values[best])) best = c;
  }
  return best;
}

}  // namespace detail

struct MdrmOptions {
  spd::MeanOptions mean;
};

inline MdrmModel mdrm_train(std::span<const LabeledSample> samples, const MdrmOptions& options = {}) {
  const auto groups = detail::group_by_class(samples, 1);
  MdrmModel model;
  model.dimension = static_cast<int>(samples.front().descriptor.rows());
  model.class_names = detail::default_names(static_cast<int>(groups.size()));
  for (const auto& group : groups) {
    model.class_means.push_back(spd::riemannian_mean(group, options.mean).mean);
  }
  return model;
}

inline std::vector<double> mdrm_distances(const MdrmModel& model, const SpdMatrix& p) {
  if (p.rows() != model.dimension) {
    throw Error(ErrorKind::DimensionMismatch, "descriptor dimension " + std::to_string(p.rows()) +
                                                  " vs model " + std::to_string(model.dimension));
  }
  std::vector<double> distances;
  for (const auto& g : model.class_means) distances.push_back(spd::riemann_distance(p, g));
  return distances;
}

inline int predict(const MdrmModel& model, const SpdMatrix& p) {
  return detail::arg_best(mdrm_distances(model, p), [](double a, double b) { return a < b; });
}

struct TsldaOptions {
  /// Shrinkage toward (tr(S)/m) I of the pooled within-class scatter.
  double gamma = 0.1;
  spd::MeanOptions mean;
};

inline TsldaModel tslda_train(std::span<const LabeledSample> samples,
                              const TsldaOptions& options = {}) {
  if (!(options.gamma >= 0.0 && options.gamma <= 1.0)) {
    throw Error(ErrorKind::Usage, "shrinkage must lie in [0, 1]");
  }
  const auto groups = detail::group_by_class(samples, 2);
  const int classes = static_cast<int>(groups.size());

  std::vector<SpdMatrix> all;
  all.reserve(samples.size());
  for (const auto& s : samples) all.push_back(s.descriptor);

  TsldaModel model;
  model.dimension = static_cast<int>(samples.front().descriptor.rows());
  model.gamma = options.gamma;
  model.class_names = detail::default_names(classes);
  model.reference_mean = spd::riemannian_mean(all, options.mean).mean;

  const auto tangents = spd::tangent_coords(model.reference_mean, std::span<const SpdMatrix>(all));
  const Eigen::Index m = tangents.front().size();

  std::vector<Vector> class_sum(classes, Vector::Zero(m));
  std::vector<int> class_count(classes, 0);
  Vector total_sum = Vector::Zero(m);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    class_sum[samples[i].label] += tangents[i];
    ++class_count[samples[i].label];
    total_sum += tangents[i];
  }
  std::vector<Vector> class_mean(classes);
  for (int c = 0; c < classes; ++c) class_mean[c] = class_sum[c] / class_count[c];

  Matrix scatter = Matrix::Zero(m, m);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vector centered = tangents[i] - class_mean[samples[i].label];
    scatter.selfadjointView<Eigen::Upper>().rankUpdate(centered);
  }
  Matrix pooled = scatter.selfadjointView<Eigen::Upper>();
  pooled /= static_cast<double>(samples.size() - classes);
  const double scale = pooled.trace() / static_cast<double>(m);
  const Matrix shrunk =
      (1.0 - options.gamma) * pooled + options.gamma * scale * Matrix::Identity(m, m);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(shrunk, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  if (!(top > 0.0) || !(bottom > 1e-12 * top)) {
    throw Error(ErrorKind::SingularScatter,
                "within-class scatter is singular (smallest/largest eigenvalue " +
                    std::to_string(top > 0.0 ? bottom / top : 0.0) +
                    "); use shrinkage gamma > 0 or more training samples");
  }
  const Eigen::LDLT<Matrix> solver(shrunk);

  for (int c = 0; c < classes; ++c) {
    const Vector rest_mean =
        (total_sum - class_sum[c]) / static_cast<double>(samples.size() - class_count[c]);
    const Vector w = solver.solve(class_mean[c] - rest_mean);
    model.weights.push_back(w);
    model.biases.push_back(-w.dot(class_mean[c] + rest_mean) / 2.0);
  }
  return model;
}

/// w_c . s + b_c for s the tangent coordinates of P at the reference mean.
inline std::vector<double> tslda_scores(const TsldaModel& model, const SpdMatrix& p) {
  if (p.rows() != model.dimension) {
    throw Error(ErrorKind::DimensionMismatch, "descriptor dimension " + std::to_string(p.rows()) +
                                                  " vs model " + std::to_string(model.dimension));
  }
  const TangentVector s = spd::tangent_coords(model.reference_mean, p);
  std::vector<double> scores;
  for (int c = 0; c < model.class_count(); ++c) {
    scores.push_back(model.weights[c].dot(s) + model.biases[c]);
  }
  return scores;
}

inline int predict(const TsldaModel& model, const SpdMatrix& p) {
  return detail::arg_best(tslda_scores(model, p), [](double a, double b) { return a > b; });
}

// ---------------------------------------------------------------------------
// Evaluation

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names)
      : names_(std::move(class_names)),
        counts_(names_.size(), std::vector<long>(names_.size(), 0)) {}

  int class_count() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& class_names() const { return names_; }

  void add(int truth, int predicted, long count = 1) { counts_.at(truth).at(predicted) += count; }
  long count(int truth, int predicted) const { return counts_.at(truth).at(predicted); }

  long row_sum(int truth) const {
    long s = 0;
    for (const long v : counts_.at(truth)) s += v;
    return s;
  }

  long total() const {
    long s = 0;
    for (int c = 0; c < class_count(); ++c) s += row_sum(c);
    return s;
  }

  /// Diagonal over row sum; 0 for a class with no samples.
  double class_accuracy(int truth) const {
    const long n = row_sum(truth);
    return n == 0 ? 0.0 : static_cast<double>(counts_[truth][truth]) / static_cast<double>(n);
  }

  double overall_accuracy() const {
    long diag = 0;
    for (int c = 0; c < class_count(); ++c) diag += counts_[c][c];
    const long n = total();
    return n == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(n);
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<long>> counts_;
};

/// "98.36%".
inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

/// Counts with a per-class accuracy column, followed by the overall accuracy.
inline std::string format_table(const ConfusionMatrix& cm) {
  std::size_t width = 8;
  for (const auto& name : cm.class_names()) width = std::max(width, name.size() + 2);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "";
  for (const auto& name : cm.class_names()) out << std::setw(static_cast<int>(width)) << name;
  out << "Accuracy\n";
  for (int t = 0; t < cm.class_count(); ++t) {
    out << std::setw(static_cast<int>(width)) << cm.class_names()[t];
    for (int p = 0; p < cm.class_count(); ++p) {
      out << std::setw(static_cast<int>(width)) << cm.count(t, p);
    }
    out << format_percent(cm.class_accuracy(t)) << '\n';
  }
  out << "Overall accuracy: " << format_percent(cm.overall_accuracy()) << '\n';
  return out.str();
}

inline std::string to_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true_class";
  for (const auto& name : cm.class_names()) out << ',' << name;
  out << '\n';
  for (int t = 0; t < cm.class_count(); ++t) {
    out << cm.class_names()[t];
    for (int p = 0; p < cm.class_count(); ++p) out << ',' << cm.count(t, p);
    out << '\n';
  }
  return out.str();
}

template <typename Model>
ConfusionMatrix evaluate(const Model& model, std::span<const LabeledSample> test) {
  if (test.empty()) throw Error(ErrorKind::EmptyInput, "empty test set");
  ConfusionMatrix cm(model.class_names);
  for (const auto& sample : test) cm.add(sample.label, predict(model, sample.descriptor));
  return cm;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline void write_names(std::ostream& out, const std::vector<std::string>& names) {
  out << "labels";
  for (const auto& name : names) {
    if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
      throw Error(ErrorKind::Format, "class name '" + name + "' must be non-empty without whitespace");
    }
    out << ' ' << name;
  }
  out << '\n';
}

inline void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw Error(ErrorKind::Format, "expected '" + token + "', found '" + got + "'");
  }
}

template <typename T>
T read_value(std::istream& in, const std::string& what) {
  T value{};
  if (!(in >> value)) throw Error(ErrorKind::Format, "cannot read " + what);
  return value;
}

inline std::vector<std::string> read_names(std::istream& in, int count) {
  expect_token(in, "labels");
  std::vector<std::string> names(count);
  for (auto& name : names) name = read_value<std::string>(in, "class name");
  return names;
}

inline std::string read_header(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  return header;
}

}  // namespace detail

inline constexpr const char* kMdrmHeader = "mdrm-model v1";
inline constexpr const char* kTsldaHeader = "tslda-model v1";

inline void write_model(std::ostream& out, const MdrmModel& model) {
  out << kMdrmHeader << '\n';
  out << "n " << model.dimension << '\n';
  out << "classes " << model.class_count() << '\n';
  detail::write_names(out, model.class_names);
  for (int c = 0; c < model.class_count(); ++c) {
    out << "mean " << c << '\n';
    cov::write_spd(out, model.class_means[c]);
  }
}

inline void write_model(std::ostream& out, const TsldaModel& model) {
  out << kTsldaHeader << '\n';
  out << std::setprecision(17);
  out << "n " << model.dimension << '\n';
  out << "classes " << model.class_count() << '\n';
  out << "gamma " << model.gamma << '\n';
  detail::write_names(out, model.class_names);
  out << "reference\n";
  cov::write_spd(out, model.reference_mean);
  for (int c = 0; c < model.class_count(); ++c) {
    out << "discriminant " << c << '\n';
    out << "bias " << model.biases[c] << '\n';
    out << "weights";
    for (Eigen::Index i = 0; i < model.weights[c].size(); ++i) out << ' ' << model.weights[c](i);
    out << '\n';
  }
}

inline MdrmModel read_mdrm_body(std::istream& in) {
  MdrmModel model;
  detail::expect_token(in, "n");
  model.dimension = detail::read_value<int>(in, "n");
  detail::expect_token(in, "classes");
  const int classes = detail::read_value<int>(in, "class count");
  if (model.dimension < 1 || classes < 2) throw Error(ErrorKind::Format, "bad model dimensions");
  model.class_names = detail::read_names(in, classes);
  for (int c = 0; c < classes; ++c) {
    detail::expect_token(in, "mean");
    if (detail::read_value<int>(in, "mean index") != c) {
      throw Error(ErrorKind::Format, "class means out of order");
    }
    model.class_means.push_back(cov::read_spd(in));
    if (model.class_means.back().rows() != model.dimension) {
      throw Error(ErrorKind::Format, "class mean dimension differs from n");
    }
  }
  return model;
}

inline TsldaModel read_tslda_body(std::istream& in) {
  TsldaModel model;
  detail::expect_token(in, "n");
  model.dimension = detail::read_value<int>(in, "n");
  detail::expect_token(in, "classes");
  const int classes = detail::read_value<int>(in, "class count");
  if (model.dimension < 1 || classes < 2) throw Error(ErrorKind::Format, "bad model dimensions");
  detail::expect_token(in, "gamma");
  model.gamma = detail::read_value<double>(in, "gamma");
  model.class_names = detail::read_names(in, classes);
  detail::expect_token(in, "reference");
  model.reference_mean = cov::read_spd(in);
  if (model.reference_mean.rows() != model.dimension) {
    throw Error(ErrorKind::Format, "reference mean dimension differs from n");
  }
  const auto m = spd::tangent_dimension(model.dimension);
  for (int c = 0; c < classes; ++c) {
    detail::expect_token(in, "discriminant");
    if (detail::read_value<int>(in, "discriminant index") != c) {
      throw Error(ErrorKind::Format, "discriminants out of order");
    }
    detail::expect_token(in, "bias");
    model.biases.push_back(detail::read_value<double>(in, "bias"));
    detail::expect_token(in, "weights");
    Vector w(m);
    for (Eigen::Index i = 0; i < m; ++i) w(i) = detail::read_value<double>(in, "weight");
    model.weights.push_back(std::move(w));
  }
  return model;
}

/// Either classifier, as loaded from disk.
struct AnyModel {
  enum class Kind { Mdrm, Tslda } kind = Kind::Tslda;
  MdrmModel mdrm;
  TsldaModel tslda;

  int dimension() const { return kind == Kind::Mdrm ? mdrm.dimension : tslda.dimension; }
  const std::vector<std::string>& class_names() const {
    return kind == Kind::Mdrm ? mdrm.class_names : tslda.class_names;
  }
};

inline AnyModel read_model(std::istream& in) {
  const std::string header = detail::read_header(in);
  AnyModel model;
  if (header == kMdrmHeader) {
    model.kind = AnyModel::Kind::Mdrm;
    model.mdrm = read_mdrm_body(in);
  } else if (header == kTsldaHeader) {
    model.kind = AnyModel::Kind::Tslda;
    model.tslda = read_tslda_body(in);
  } else {
    throw Error(ErrorKind::Format, "unknown model header '" + header + "'");
  }
  return model;
}

inline int predict(const AnyModel& model, const SpdMatrix& p) {
  return model.kind == AnyModel::Kind::Mdrm ? predict(model.mdrm, p) : predict(model.tslda, p);
}

inline ConfusionMatrix evaluate(const AnyModel& model, std::span<const LabeledSample> test) {
  return model.kind == AnyModel::Kind::Mdrm ? evaluate(model.mdrm, test)
                                            : evaluate(model.tslda, test);
}

inline void write_model(std::ostream& out, const AnyModel& model) {
  if (model.kind == AnyModel::Kind::Mdrm) {
    write_model(out, model.mdrm);
  } else {
    write_model(out, model.tslda);
  }
}

inline AnyModel read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open model " + path);
  return read_model(in);
}

template <typename Model>
void write_model_file(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write model " + path);
  write_model(out, model);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

}  // namespace wbc::classify
