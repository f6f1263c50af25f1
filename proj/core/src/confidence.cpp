#include "csa/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace csa {

namespace {
constexpr double kVarianceEpsilon = 1e-18;
}

TopTwoStats top_two_classes(const PredictionTensor& tensor, int sample) {
  const int model_count = tensor.model_count();
  const int class_count = tensor.class_count();
  if (class_count < 2) throw Error("top_two_classes needs at least 2 classes");

  Vector mean = Vector::Zero(class_count);
  for (const Matrix& slice : tensor.slices) mean += slice.row(sample).transpose();
  mean /= static_cast<double>(model_count);

  TopTwoStats stats;
  int best = 0;
  for (int k = 1; k < class_count; ++k)
    if (mean[k] > mean[best]) best = k;
  int second = best == 0 ? 1 : 0;
  for (int k = 0; k < class_count; ++k) {
    if (k == best) continue;
    if (mean[k] > mean[second]) second = k;
  }
  stats.top_class = best;
  stats.second_class = second;
  stats.top_mean = mean[best];
  stats.second_mean = mean[second];
  for (const Matrix& slice : tensor.slices) {
    stats.top_variance += std::pow(slice(sample, best) - mean[best], 2);
    stats.second_variance += std::pow(slice(sample, second) - mean[second], 2);
  }
  stats.top_variance /= static_cast<double>(model_count);
  stats.second_variance /= static_cast<double>(model_count);
  return stats;
}

double welch_t_value(double top_mean, double second_mean, double top_variance,
                     double second_variance, int model_count) {
  if (model_count < 2) throw Error("t-value needs at least 2 models");
  if (top_variance < kVarianceEpsilon && second_variance < kVarianceEpsilon) {
    if (top_mean > second_mean) return std::numeric_limits<double>::infinity();
    if (top_mean < second_mean) return -std::numeric_limits<double>::infinity();
    return 0.0;
  }
  return (top_mean - second_mean) /
         std::sqrt((top_variance + second_variance) / model_count);
}

double welch_degrees_of_freedom(double top_variance, double second_variance,
                                int model_count) {
  if (model_count < 2) throw Error("degrees of freedom need at least 2 models");
  double sum = top_variance + second_variance;
  double quartic = top_variance * top_variance + second_variance * second_variance;
  if (quartic <= 0.0) throw Error("degrees of freedom undefined: both variances are zero");
  return (model_count - 1) * sum * sum / quartic;
}

double total_variance(const PredictionTensor& tensor, int sample) {
  const int model_count = tensor.model_count();
  const int class_count = tensor.class_count();
  if (model_count < 2) throw Error("total variance needs at least 2 models");
  double total = 0.0;
  for (int k = 0; k < class_count; ++k) {
    double mean = 0.0;
    for (const Matrix& slice : tensor.slices) mean += slice(sample, k);
    mean /= model_count;
    double var = 0.0;
    for (const Matrix& slice : tensor.slices) var += std::pow(slice(sample, k) - mean, 2);
    total += var / model_count;
  }
  return total / class_count;
}

double total_entropy(const PredictionTensor& tensor, int sample) {
  const int class_count = tensor.class_count();
  double entropy = 0.0;
  for (int k = 0; k < class_count; ++k) {
    double mean = 0.0;
    for (const Matrix& slice : tensor.slices) mean += slice(sample, k);
    mean /= tensor.model_count();
    if (mean > 0) entropy -= mean * std::log(mean);
  }
  return entropy;
}

ConfidenceReport compute_confidence(const PredictionTensor& tensor) {
  const int n = tensor.sample_count();
  const int m = tensor.model_count();
  ConfidenceReport report;
  report.t_value.resize(n);
  report.degrees_of_freedom.resize(n);
  report.variance.resize(n);
  report.entropy.resize(n);
  report.top_class.resize(n);
  report.second_class.resize(n);
  for (int i = 0; i < n; ++i) {
    TopTwoStats stats = top_two_classes(tensor, i);
    report.top_class[i] = stats.top_class;
    report.second_class[i] = stats.second_class;
    report.t_value[i] = welch_t_value(stats.top_mean, stats.second_mean,
                                      stats.top_variance, stats.second_variance, m);
    report.degrees_of_freedom[i] =
        (stats.top_variance + stats.second_variance > 0)
            ? welch_degrees_of_freedom(stats.top_variance, stats.second_variance, m)
            : std::numeric_limits<double>::quiet_NaN();
    report.variance[i] = total_variance(tensor, i);
    report.entropy[i] = total_entropy(tensor, i);
  }
  return report;
}

std::vector<int> select_confident(const ConfidenceReport& report,
                                  ConfidenceCriterion criterion,
                                  const ConfidenceParams& params) {
  const int n = report.sample_count();
  std::vector<int> accepted;
  if (criterion == ConfidenceCriterion::kTTest) {
    for (int i = 0; i < n; ++i)
      if (report.t_value[i] >= params.t_threshold) accepted.push_back(i);
    return accepted;
  }
  const std::vector<double>& score =
      criterion == ConfidenceCriterion::kTotalVariance ? report.variance : report.entropy;
  int keep = static_cast<int>(std::floor(params.keep_fraction * n));
  keep = std::clamp(keep, 0, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return a < b;  // ties by sample index
  });
  accepted.assign(order.begin(), order.begin() + keep);
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

void write_confidence_csv(const ConfidenceReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write confidence CSV: " + path);
  out << "sample,t_value,degrees_of_freedom,total_variance,entropy,top_class,second_class\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int i = 0; i < report.sample_count(); ++i) {
    out << i << ',' << fmt(report.t_value[i]) << ',' << fmt(report.degrees_of_freedom[i])
        << ',' << fmt(report.variance[i]) << ',' << fmt(report.entropy[i]) << ','
        << report.top_class[i] << ',' << report.second_class[i] << "\n";
  }
}

}  // namespace csa
