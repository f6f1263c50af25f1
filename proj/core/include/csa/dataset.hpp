#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csa/common.hpp"

namespace csa {

// Tabular classification data. Labels are class indices in [0, class_count);
// kUnlabeled marks rows without a label. Feature values are finite by
// construction (loaders reject NaN/inf).
struct TabularDataset {
  static constexpr int kUnlabeled = -1;

  Matrix features;                       // N x d
  std::vector<int> labels;               // length N, kUnlabeled allowed
  int class_count = 0;
  std::vector<std::string> label_names;  // class index -> original label string

  int sample_count() const { return static_cast<int>(features.rows()); }
  int feature_count() const { return static_cast<int>(features.cols()); }
  int labeled_count() const;

  // Throws Error if any invariant is broken.
  void validate() const;
};

// Empirical per-class assignment bounds: w is the label frequency vector,
// w_plus/w_minus the upper and lower allocation bounds derived from it.
struct ClassFrequencyBounds {
  Vector w;
  Vector w_plus;
  Vector w_minus;

  void validate(double rho = 1.0) const;
};

struct GaussianMixtureSpec {
  Matrix class_means;            // K x d
  Vector noise_variances;        // d, diagonal covariance shared across classes
  std::vector<int> samples_per_class;

  void validate() const;
};

// CSV I/O. First row is the header; the label column is matched by name and
// every other column is parsed as a real feature. Rows whose label cell equals
// unlabeled_marker (or is empty) are kept as unlabeled.
TabularDataset load_csv(const std::string& path, const std::string& label_column,
                        const std::string& unlabeled_marker = "?");
void save_csv(const TabularDataset& data, const std::string& path,
              const std::string& label_column = "label",
              const std::string& unlabeled_marker = "?");

// w_k = count_k / n_labeled; w_plus = min(slack_factor * w, 1);
// w_minus = max((2 - slack_factor) * w, 0). slack_factor 1.1 gives the
// 1.1w / 0.9w defaults. Throws if a class has no labeled sample.
ClassFrequencyBounds estimate_bounds(const std::vector<int>& labels, int class_count,
                                     double slack_factor);

TabularDataset sample_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed);

// Unlabeled pool whose true labels are retained for auditing only. Reads of
// hidden labels outside a LeakAudit::EvalScope count as leak violations.
class UnlabeledPool {
 public:
  UnlabeledPool() = default;
  UnlabeledPool(Matrix features, std::vector<int> hidden_labels,
                std::vector<int> source_rows);

  int size() const { return static_cast<int>(features_.rows()); }
  const Matrix& features() const { return features_; }
  int source_row(int i) const { return source_rows_.at(i); }

  // Ground-truth label for pool row i (kUnlabeled if the source row had none).
  int hidden_label(int i) const {
    LeakAudit::on_hidden_label_read();
    return hidden_labels_.at(i);
  }

  // Removes the given pool rows (indices into the current pool).
  void remove(const std::vector<int>& pool_rows);

  UnlabeledPool truncated(int max_size) const;

 private:
  Matrix features_;
  std::vector<int> hidden_labels_;
  std::vector<int> source_rows_;
};

// Held-out evaluation data. Feature reads outside a LeakAudit::EvalScope
// count as leak violations; labels are only meaningful inside evaluation.
class TestSet {
 public:
  TestSet() = default;
  TestSet(Matrix features, std::vector<int> labels, std::vector<int> source_rows);

  int size() const { return static_cast<int>(labels_.size()); }
  const Matrix& features() const {
    LeakAudit::on_test_feature_read();
    return features_;
  }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& source_rows() const { return source_rows_; }

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<int> source_rows_;
};

struct LabeledSet {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> source_rows;

  int size() const { return static_cast<int>(labels.size()); }
};

struct Split {
  LabeledSet labeled;
  UnlabeledPool unlabeled;
  TestSet test;
  int class_count = 0;
  std::vector<std::string> label_names;

  // FNV-1a over the three index partitions; used to audit that different
  // methods saw byte-identical splits.
  std::string partition_hash() const;
};

// Stratified split: n_labeled and n_test are allocated per class by largest
// remainder; everything else (plus rows that were already unlabeled) becomes
// the unlabeled pool. Throws if some class cannot contribute to both the
// labeled and test partitions.
Split split_dataset(const TabularDataset& data, int n_labeled, int n_test,
                    std::uint64_t seed);

// Per-column zero-mean/unit-variance transform with statistics taken from the
// fitting matrix only (the labeled set in the pipeline).
class StandardScaler {
 public:
  static StandardScaler fit(const Matrix& features);
  Matrix transform(const Matrix& features) const;
  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

 private:
  Vector mean_;
  Vector scale_;
};

}  // namespace csa
