#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csa/common.hpp"

namespace csa {

// Hyperparameters for one ensemble member. Diversity across members comes
// from sampling these plus bootstrap resampling and feature subsampling.
struct ClassifierSpec {
  double learning_rate = 0.1;
  double l2_penalty = 1e-3;
  int epochs = 300;
  double feature_subsample = 1.0;  // fraction of features in (0, 1]
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HyperparameterRanges {
  double learning_rate_min = 0.01, learning_rate_max = 0.3;
  int epochs_min = 100, epochs_max = 1000;
  double feature_subsample_min = 0.4, feature_subsample_max = 1.0;
  double l2_min = 1e-4, l2_max = 1e-1;  // sampled log-uniformly
  bool bootstrap = true;

  void validate() const;
};

std::vector<ClassifierSpec> sample_specs(int count, const HyperparameterRanges& ranges,
                                         std::uint64_t seed);

// Multinomial logistic regression trained by full-batch gradient descent on a
// (possibly bootstrapped) sample restricted to a random feature subset.
class LogisticModel {
 public:
  static LogisticModel fit(const ClassifierSpec& spec, const Matrix& features,
                           const std::vector<int>& labels, int class_count);

  // N x K row-stochastic probabilities; only the model's feature subset is read.
  Matrix predict_proba(const Matrix& features) const;

  const std::vector<int>& feature_subset() const { return feature_subset_; }
  const Matrix& coefficients() const { return coefficients_; }
  int class_count() const { return static_cast<int>(coefficients_.cols()); }

  LogisticModel() = default;
  LogisticModel(std::vector<int> feature_subset, Matrix coefficients);

 private:
  std::vector<int> feature_subset_;
  Matrix coefficients_;  // (|subset| + 1) x K, last row is the intercept
};

// Mean negative log-likelihood plus (l2/2)*||W||^2, and its gradient. The fit
// loop uses this; tests check the gradient against finite differences.
double logistic_loss(const Matrix& coefficients, const Matrix& design,
                     const std::vector<int>& labels, double l2_penalty);
Matrix logistic_gradient(const Matrix& coefficients, const Matrix& design,
                         const std::vector<int>& labels, double l2_penalty);

// M x N x K ensemble predictions, stored as M row-stochastic N x K slices.
struct PredictionTensor {
  std::vector<Matrix> slices;

  int model_count() const { return static_cast<int>(slices.size()); }
  int sample_count() const { return slices.empty() ? 0 : static_cast<int>(slices[0].rows()); }
  int class_count() const { return slices.empty() ? 0 : static_cast<int>(slices[0].cols()); }

  void validate() const;  // every row of every slice sums to 1 within 1e-6
};

class EnsembleModel {
 public:
  EnsembleModel() = default;
  EnsembleModel(std::vector<LogisticModel> members, std::vector<ClassifierSpec> specs);

  static EnsembleModel fit(const std::vector<ClassifierSpec>& specs, const Matrix& features,
                           const std::vector<int>& labels, int class_count,
                           int workers = 1);

  PredictionTensor predict_tensor(const Matrix& features, int workers = 1) const;

  int size() const { return static_cast<int>(members_.size()); }
  const std::vector<LogisticModel>& members() const { return members_; }
  const std::vector<ClassifierSpec>& specs() const { return specs_; }

 private:
  std::vector<LogisticModel> members_;
  std::vector<ClassifierSpec> specs_;
};

// P_bar[i,k] = mean over models of slice[m](i,k).
Matrix mean_probabilities(const PredictionTensor& tensor);

// Floor probabilities at 1e-12 so -log stays finite downstream.
inline constexpr double kProbabilityFloor = 1e-12;
Matrix clamp_probabilities(const Matrix& probs);

// JSON model file: members (specs, feature subsets, coefficients), class
// count, label names and optional standardization statistics.
struct ModelSnapshot {
  EnsembleModel ensemble;
  int class_count = 0;
  std::vector<std::string> label_names;
  bool has_scaler = false;
  Vector scaler_mean;
  Vector scaler_scale;
};

void save_model_json(const ModelSnapshot& snapshot, const std::string& path);
ModelSnapshot load_model_json(const std::string& path);

}  // namespace csa
