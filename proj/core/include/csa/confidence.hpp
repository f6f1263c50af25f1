#pragma once

#include <string>
#include <vector>

#include "csa/ensemble.hpp"

namespace csa {

// Means and population variances (divide by M) of the ensemble's predicted
// probability for the top and runner-up classes of one sample. Ties are
// broken toward the lower class index.
struct TopTwoStats {
  int top_class = 0;
  int second_class = 0;
  double top_mean = 0.0;
  double second_mean = 0.0;
  double top_variance = 0.0;
  double second_variance = 0.0;
};

TopTwoStats top_two_classes(const PredictionTensor& tensor, int sample);

// Welch statistic (mu1 - mu2) / sqrt((var1 + var2) / M). When both variances
// vanish (< 1e-18) the result is +/-inf by mean ordering, or 0 on equal means,
// so rankings stay well defined without NaNs. Throws for M < 2.
double welch_t_value(double top_mean, double second_mean, double top_variance,
                     double second_variance, int model_count);

// (M-1) * (v1 + v2)^2 / (v1^2 + v2^2). Throws for M < 2 or both variances zero.
double welch_degrees_of_freedom(double top_variance, double second_variance,
                                int model_count);

// Mean over classes of the across-model population variance of p_mk.
double total_variance(const PredictionTensor& tensor, int sample);

// Shannon entropy (natural log) of the model-averaged probability vector.
double total_entropy(const PredictionTensor& tensor, int sample);

enum class ConfidenceCriterion { kTTest, kTotalVariance, kEntropy };

struct ConfidenceParams {
  double t_threshold = 2.0;         // accept T >= threshold (inclusive)
  double keep_fraction = 0.5;       // variance/entropy: accept this fraction
};

struct ConfidenceReport {
  std::vector<double> t_value;
  std::vector<double> degrees_of_freedom;  // NaN when undefined (all-consensus)
  std::vector<double> variance;
  std::vector<double> entropy;
  std::vector<int> top_class;
  std::vector<int> second_class;

  int sample_count() const { return static_cast<int>(t_value.size()); }
};

ConfidenceReport compute_confidence(const PredictionTensor& tensor);

// Accepted sample indices, ascending. An empty result is the distinguished
// "nothing confident" outcome, not an error.
std::vector<int> select_confident(const ConfidenceReport& report,
                                  ConfidenceCriterion criterion,
                                  const ConfidenceParams& params);

// One row per sample: t_value, dof, variance, entropy, top/second class.
void write_confidence_csv(const ConfidenceReport& report, const std::string& path);

}  // namespace csa
