#include "csa/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "csa/dataset.hpp"

namespace csa {

using json = nlohmann::json;

void ClassifierSpec::validate() const {
  if (learning_rate <= 0) throw Error("learning_rate must be positive");
  if (l2_penalty < 0) throw Error("l2_penalty must be nonnegative");
  if (epochs < 1) throw Error("epochs must be positive");
  if (feature_subsample <= 0 || feature_subsample > 1)
    throw Error("feature_subsample must be in (0, 1]");
}

void HyperparameterRanges::validate() const {
  if (learning_rate_min <= 0 || learning_rate_max < learning_rate_min)
    throw Error("invalid learning rate range");
  if (epochs_min < 1 || epochs_max < epochs_min) throw Error("invalid epochs range");
  if (feature_subsample_min <= 0 || feature_subsample_max > 1 ||
      feature_subsample_max < feature_subsample_min)
    throw Error("invalid feature_subsample range");
  if (l2_min < 0 || l2_max < l2_min) throw Error("invalid l2 range");
  if (l2_min == 0 && l2_max > 0) throw Error("l2 range is sampled log-uniformly; l2_min must be > 0");
}

std::vector<ClassifierSpec> sample_specs(int count, const HyperparameterRanges& ranges,
                                         std::uint64_t seed) {
  if (count < 1) throw Error("ensemble size must be >= 1");
  ranges.validate();
  auto gen = rng::engine(seed, /*stream=*/2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ClassifierSpec> specs;
  specs.reserve(count);
  for (int m = 0; m < count; ++m) {
    ClassifierSpec spec;
    spec.learning_rate =
        ranges.learning_rate_min + unit(gen) * (ranges.learning_rate_max - ranges.learning_rate_min);
    spec.epochs = ranges.epochs_min +
                  static_cast<int>(unit(gen) * (ranges.epochs_max - ranges.epochs_min + 1));
    spec.epochs = std::min(spec.epochs, ranges.epochs_max);
    spec.feature_subsample = ranges.feature_subsample_min +
                             unit(gen) * (ranges.feature_subsample_max - ranges.feature_subsample_min);
    spec.l2_penalty = ranges.l2_min == ranges.l2_max
                          ? ranges.l2_min
                          : std::exp(std::log(ranges.l2_min) +
                                     unit(gen) * (std::log(ranges.l2_max) - std::log(ranges.l2_min)));
    spec.bootstrap = ranges.bootstrap;
    spec.seed = rng::derive(seed, 100 + static_cast<std::uint64_t>(m));
    spec.validate();
    specs.push_back(spec);
  }
  return specs;
}

namespace {

Matrix softmax_rows(const Matrix& scores) {
  Matrix out = scores;
  for (int i = 0; i < out.rows(); ++i) {
    double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix with_intercept(const Matrix& features) {
  Matrix design(features.rows(), features.cols() + 1);
  design.leftCols(features.cols()) = features;
  design.col(features.cols()).setOnes();
  return design;
}

Matrix one_hot(const std::vector<int>& labels, int class_count) {
  Matrix y = Matrix::Zero(static_cast<int>(labels.size()), class_count);
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) y(i, labels[i]) = 1.0;
  return y;
}

}  // namespace

double logistic_loss(const Matrix& coefficients, const Matrix& design,
                     const std::vector<int>& labels, double l2_penalty) {
  Matrix probs = softmax_rows(design * coefficients);
  double nll = 0.0;
  for (int i = 0; i < probs.rows(); ++i)
    nll -= std::log(std::max(probs(i, labels[i]), 1e-300));
  nll /= static_cast<double>(probs.rows());
  return nll + 0.5 * l2_penalty * coefficients.squaredNorm();
}

Matrix logistic_gradient(const Matrix& coefficients, const Matrix& design,
                         const std::vector<int>& labels, double l2_penalty) {
  Matrix probs = softmax_rows(design * coefficients);
  Matrix diff = probs - one_hot(labels, static_cast<int>(coefficients.cols()));
  return design.transpose() * diff / static_cast<double>(design.rows()) +
         l2_penalty * coefficients;
}

LogisticModel::LogisticModel(std::vector<int> feature_subset, Matrix coefficients)
    : feature_subset_(std::move(feature_subset)), coefficients_(std::move(coefficients)) {}

LogisticModel LogisticModel::fit(const ClassifierSpec& spec, const Matrix& features,
                                 const std::vector<int>& labels, int class_count) {
  spec.validate();
  const int n = static_cast<int>(features.rows());
  const int d = static_cast<int>(features.cols());
  if (n < 1 || static_cast<int>(labels.size()) != n) throw Error("fit: bad training data");
  {
    std::vector<bool> seen(class_count, false);
    for (int y : labels) {
      if (y < 0 || y >= class_count) throw Error("fit: label out of range");
      seen[y] = true;
    }
    for (int k = 0; k < class_count; ++k)
      if (!seen[k]) throw Error("fit: class " + std::to_string(k) + " has no training sample");
  }

  auto gen = rng::engine(spec.seed, /*stream=*/3);

  // Feature subset of size ceil(feature_subsample * d), partial Fisher-Yates.
  int subset_size = std::min(d, std::max(1, static_cast<int>(std::ceil(spec.feature_subsample * d))));
  std::vector<int> all(d);
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < subset_size; ++i) {
    std::uniform_int_distribution<int> pick(i, d - 1);
    std::swap(all[i], all[pick(gen)]);
  }
  std::vector<int> subset(all.begin(), all.begin() + subset_size);
  std::sort(subset.begin(), subset.end());

  // Bootstrap resample; retry a few times if it drops a class, else train on
  // the full set.
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (spec.bootstrap) {
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int attempt = 0; attempt < 20; ++attempt) {
      std::vector<int> draw(n);
      std::vector<bool> seen(class_count, false);
      for (int i = 0; i < n; ++i) {
        draw[i] = pick(gen);
        seen[labels[draw[i]]] = true;
      }
      if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
        rows = std::move(draw);
        break;
      }
    }
  }

  Matrix sub(n, subset_size);
  std::vector<int> sub_labels(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < subset_size; ++j) sub(i, j) = features(rows[i], subset[j]);
    sub_labels[i] = labels[rows[i]];
  }
  Matrix design = with_intercept(sub);
  Matrix coefficients = Matrix::Zero(subset_size + 1, class_count);
  Matrix targets = one_hot(sub_labels, class_count);

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Matrix probs = softmax_rows(design * coefficients);
    Matrix grad = design.transpose() * (probs - targets) / static_cast<double>(n) +
                  spec.l2_penalty * coefficients;
    coefficients -= spec.learning_rate * grad;
    if (!coefficients.allFinite())
      throw Error("non-finite loss while training at epoch " + std::to_string(epoch));
  }
  return LogisticModel(std::move(subset), std::move(coefficients));
}

Matrix LogisticModel::predict_proba(const Matrix& features) const {
  const int subset_size = static_cast<int>(feature_subset_.size());
  for (int j : feature_subset_)
    if (j >= features.cols()) throw Error("predict: feature dimension mismatch");
  Matrix sub(features.rows(), subset_size);
  for (int j = 0; j < subset_size; ++j) sub.col(j) = features.col(feature_subset_[j]);
  return softmax_rows(with_intercept(sub) * coefficients_);
}

void PredictionTensor::validate() const {
  for (const Matrix& slice : slices) {
    if (slice.rows() != sample_count() || slice.cols() != class_count())
      throw Error("prediction tensor slices have inconsistent shapes");
    if ((slice.array() < -1e-12).any() || (slice.array() > 1.0 + 1e-9).any())
      throw Error("prediction tensor entries must lie in [0, 1]");
    for (int i = 0; i < slice.rows(); ++i)
      if (std::abs(slice.row(i).sum() - 1.0) > 1e-6)
        throw Error("prediction tensor row does not sum to 1");
  }
}

EnsembleModel::EnsembleModel(std::vector<LogisticModel> members,
                             std::vector<ClassifierSpec> specs)
    : members_(std::move(members)), specs_(std::move(specs)) {}

EnsembleModel EnsembleModel::fit(const std::vector<ClassifierSpec>& specs,
                                 const Matrix& features, const std::vector<int>& labels,
                                 int class_count, int workers) {
  if (specs.empty()) throw Error("ensemble needs at least one member spec");
  std::vector<LogisticModel> members(specs.size());
  parallel_for(static_cast<int>(specs.size()), workers, [&](int m) {
    members[m] = LogisticModel::fit(specs[m], features, labels, class_count);
  });
  return EnsembleModel(std::move(members), specs);
}

PredictionTensor EnsembleModel::predict_tensor(const Matrix& features, int workers) const {
  PredictionTensor tensor;
  tensor.slices.resize(members_.size());
  parallel_for(static_cast<int>(members_.size()), workers, [&](int m) {
    tensor.slices[m] = members_[m].predict_proba(features);
  });
  return tensor;
}

Matrix mean_probabilities(const PredictionTensor& tensor) {
  if (tensor.slices.empty()) throw Error("mean_probabilities: empty tensor");
  Matrix mean = Matrix::Zero(tensor.sample_count(), tensor.class_count());
  for (const Matrix& slice : tensor.slices) mean += slice;
  return mean / static_cast<double>(tensor.model_count());
}

Matrix clamp_probabilities(const Matrix& probs) {
  return probs.array().max(kProbabilityFloor).min(1.0);
}

namespace {

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (int i = 0; i < static_cast<int>(arr.size()); ++i) v[i] = arr[i].get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(rows.size(), rows[0].size());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j].get<double>();
  return m;
}

}  // namespace

void save_model_json(const ModelSnapshot& snapshot, const std::string& path) {
  json doc;
  doc["class_count"] = snapshot.class_count;
  doc["label_names"] = snapshot.label_names;
  json members = json::array();
  for (int m = 0; m < snapshot.ensemble.size(); ++m) {
    const auto& model = snapshot.ensemble.members()[m];
    const auto& spec = snapshot.ensemble.specs()[m];
    json member;
    member["spec"] = {{"learning_rate", spec.learning_rate},
                      {"l2_penalty", spec.l2_penalty},
                      {"epochs", spec.epochs},
                      {"feature_subsample", spec.feature_subsample},
                      {"bootstrap", spec.bootstrap},
                      {"seed", spec.seed}};
    member["feature_subset"] = model.feature_subset();
    member["coefficients"] = matrix_to_json(model.coefficients());
    members.push_back(member);
  }
  doc["members"] = members;
  if (snapshot.has_scaler) {
    doc["scaler"] = {{"mean", vector_to_json(snapshot.scaler_mean)},
                     {"scale", vector_to_json(snapshot.scaler_scale)}};
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path);
  out << doc.dump(2) << "\n";
}

ModelSnapshot load_model_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("invalid model file " + path + ": " + e.what());
  }
  ModelSnapshot snapshot;
  snapshot.class_count = doc.at("class_count").get<int>();
  snapshot.label_names = doc.at("label_names").get<std::vector<std::string>>();
  std::vector<LogisticModel> members;
  std::vector<ClassifierSpec> specs;
  for (const auto& member : doc.at("members")) {
    ClassifierSpec spec;
    const auto& s = member.at("spec");
    spec.learning_rate = s.at("learning_rate").get<double>();
    spec.l2_penalty = s.at("l2_penalty").get<double>();
    spec.epochs = s.at("epochs").get<int>();
    spec.feature_subsample = s.at("feature_subsample").get<double>();
    spec.bootstrap = s.at("bootstrap").get<bool>();
    spec.seed = s.at("seed").get<std::uint64_t>();
    specs.push_back(spec);
    members.emplace_back(member.at("feature_subset").get<std::vector<int>>(),
                         matrix_from_json(member.at("coefficients")));
  }
  snapshot.ensemble = EnsembleModel(std::move(members), std::move(specs));
  if (doc.contains("scaler")) {
    snapshot.has_scaler = true;
    snapshot.scaler_mean = vector_from_json(doc["scaler"]["mean"]);
    snapshot.scaler_scale = vector_from_json(doc["scaler"]["scale"]);
  }
  return snapshot;
}

}  // namespace csa
