#include "csa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace csa {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, int row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw Error("non-numeric feature cell '" + cell + "' at row " + std::to_string(row) +
                ", column '" + column + "'");
  }
  if (!std::isfinite(value)) {
    throw Error("non-finite feature value at row " + std::to_string(row) + ", column '" +
                column + "'");
  }
  return value;
}

// %.17g survives a write/parse round trip bit-exactly.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int TabularDataset::labeled_count() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(),
                                        [](int y) { return y != kUnlabeled; }));
}

void TabularDataset::validate() const {
  if (sample_count() < 1) throw Error("dataset must contain at least one sample");
  if (class_count < 2) throw Error("dataset must have at least 2 classes");
  if (feature_count() < 1) throw Error("dataset must have at least one feature");
  if (static_cast<int>(labels.size()) != sample_count())
    throw Error("label vector length does not match feature rows");
  for (int i = 0; i < sample_count(); ++i) {
    if (labels[i] != kUnlabeled && (labels[i] < 0 || labels[i] >= class_count))
      throw Error("label out of range at row " + std::to_string(i));
  }
  if (!features.allFinite()) throw Error("feature matrix contains non-finite values");
}

void ClassFrequencyBounds::validate(double rho) const {
  const int k = static_cast<int>(w.size());
  if (k < 1 || w_plus.size() != k || w_minus.size() != k)
    throw Error("class frequency bounds have inconsistent lengths");
  if (std::abs(w.sum() - 1.0) > 1e-9) throw Error("label frequencies must sum to 1");
  for (int i = 0; i < k; ++i) {
    if (w[i] < 0) throw Error("negative label frequency");
    if (w_minus[i] > w[i] + 1e-12 || w[i] > w_plus[i] + 1e-12)
      throw Error("bounds must satisfy w_minus <= w <= w_plus");
  }
  if (rho * w_minus.sum() > 1.0 + 1e-9)
    throw Error("infeasible bounds: rho * sum(w_minus) exceeds 1");
}

void GaussianMixtureSpec::validate() const {
  const int k = static_cast<int>(class_means.rows());
  if (k < 2) throw Error("mixture needs at least 2 classes");
  if (class_means.cols() < 1) throw Error("mixture needs at least one dimension");
  if (noise_variances.size() != class_means.cols())
    throw Error("noise_variances length must match the mean dimension");
  if ((noise_variances.array() <= 0.0).any())
    throw Error("noise variances must be strictly positive");
  if (static_cast<int>(samples_per_class.size()) != k)
    throw Error("samples_per_class length must match the class count");
  for (int c : samples_per_class)
    if (c < 1) throw Error("samples_per_class entries must be >= 1");
}

TabularDataset load_csv(const std::string& path, const std::string& label_column,
                        const std::string& unlabeled_marker) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV file: " + path);
  auto header = split_line(line);
  for (auto& h : header) h = trim(h);

  int label_col = -1;
  for (int j = 0; j < static_cast<int>(header.size()); ++j)
    if (header[j] == label_column) label_col = j;
  if (label_col < 0) throw Error("missing column '" + label_column + "' in " + path);
  if (header.size() < 2) throw Error("CSV has no feature columns: " + path);

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  int row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw Error("row " + std::to_string(row_number) + " has " +
                  std::to_string(cells.size()) + " cells, expected " +
                  std::to_string(header.size()));
    std::vector<double> feats;
    feats.reserve(header.size() - 1);
    for (int j = 0; j < static_cast<int>(cells.size()); ++j) {
      std::string cell = trim(cells[j]);
      if (j == label_col) {
        raw_labels.push_back(cell);
      } else {
        feats.push_back(parse_number(cell, row_number, header[j]));
      }
    }
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw Error("CSV has no data rows: " + path);

  // Class indices follow the lexicographic order of the distinct label strings.
  std::map<std::string, int> classes;
  for (const auto& s : raw_labels)
    if (s != unlabeled_marker && !s.empty()) classes[s] = 0;
  if (classes.size() < 2) throw Error("fewer than 2 distinct labels in " + path);
  int next = 0;
  for (auto& [name, index] : classes) index = next++;

  TabularDataset data;
  data.class_count = static_cast<int>(classes.size());
  for (const auto& [name, index] : classes) data.label_names.push_back(name);
  data.features.resize(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  data.labels.resize(rows.size());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    for (int j = 0; j < static_cast<int>(rows[i].size()); ++j)
      data.features(i, j) = rows[i][j];
    const std::string& s = raw_labels[i];
    data.labels[i] = (s == unlabeled_marker || s.empty()) ? TabularDataset::kUnlabeled
                                                          : classes.at(s);
  }
  data.validate();
  return data;
}

void save_csv(const TabularDataset& data, const std::string& path,
              const std::string& label_column, const std::string& unlabeled_marker) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write CSV file: " + path);
  for (int j = 0; j < data.feature_count(); ++j) out << "f" << j << ",";
  out << label_column << "\n";
  for (int i = 0; i < data.sample_count(); ++i) {
    for (int j = 0; j < data.feature_count(); ++j) out << format_double(data.features(i, j)) << ",";
    int y = data.labels[i];
    out << (y == TabularDataset::kUnlabeled ? unlabeled_marker : data.label_names.at(y)) << "\n";
  }
}

ClassFrequencyBounds estimate_bounds(const std::vector<int>& labels, int class_count,
                                     double slack_factor) {
  if (class_count < 2) throw Error("estimate_bounds needs at least 2 classes");
  if (slack_factor <= 0) throw Error("slack_factor must be positive");
  std::vector<int> counts(class_count, 0);
  int total = 0;
  for (int y : labels) {
    if (y == TabularDataset::kUnlabeled) continue;
    if (y < 0 || y >= class_count) throw Error("label out of range in estimate_bounds");
    ++counts[y];
    ++total;
  }
  if (total == 0) throw Error("estimate_bounds needs at least one labeled sample");
  for (int k = 0; k < class_count; ++k)
    if (counts[k] == 0)
      throw Error("class " + std::to_string(k) + " has no labeled sample");

  ClassFrequencyBounds bounds;
  bounds.w.resize(class_count);
  bounds.w_plus.resize(class_count);
  bounds.w_minus.resize(class_count);
  for (int k = 0; k < class_count; ++k) {
    bounds.w[k] = static_cast<double>(counts[k]) / total;
    bounds.w_plus[k] = std::min(slack_factor * bounds.w[k], 1.0);
    bounds.w_minus[k] = std::max((2.0 - slack_factor) * bounds.w[k], 0.0);
  }
  return bounds;
}

TabularDataset sample_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int k_count = static_cast<int>(spec.class_means.rows());
  const int dim = static_cast<int>(spec.class_means.cols());
  const int total = std::accumulate(spec.samples_per_class.begin(),
                                    spec.samples_per_class.end(), 0);

  TabularDataset data;
  data.class_count = k_count;
  for (int k = 0; k < k_count; ++k) data.label_names.push_back(std::to_string(k));
  data.features.resize(total, dim);
  data.labels.resize(total);

  Vector noise_scale = spec.noise_variances.array().sqrt();
  auto gen = rng::engine(seed, /*stream=*/0);
  std::normal_distribution<double> normal(0.0, 1.0);
  int row = 0;
  for (int k = 0; k < k_count; ++k) {
    for (int i = 0; i < spec.samples_per_class[k]; ++i, ++row) {
      for (int j = 0; j < dim; ++j)
        data.features(row, j) = spec.class_means(k, j) + noise_scale[j] * normal(gen);
      data.labels[row] = k;
    }
  }
  data.validate();
  return data;
}

UnlabeledPool::UnlabeledPool(Matrix features, std::vector<int> hidden_labels,
                             std::vector<int> source_rows)
    : features_(std::move(features)),
      hidden_labels_(std::move(hidden_labels)),
      source_rows_(std::move(source_rows)) {
  if (static_cast<int>(hidden_labels_.size()) != features_.rows() ||
      hidden_labels_.size() != source_rows_.size())
    throw Error("unlabeled pool fields have inconsistent sizes");
}

void UnlabeledPool::remove(const std::vector<int>& pool_rows) {
  std::vector<bool> drop(size(), false);
  for (int r : pool_rows) drop.at(r) = true;
  int kept = static_cast<int>(size() - pool_rows.size());
  Matrix features(kept, features_.cols());
  std::vector<int> hidden, sources;
  hidden.reserve(kept);
  sources.reserve(kept);
  int out = 0;
  for (int i = 0; i < size(); ++i) {
    if (drop[i]) continue;
    features.row(out++) = features_.row(i);
    hidden.push_back(hidden_labels_[i]);
    sources.push_back(source_rows_[i]);
  }
  features_ = std::move(features);
  hidden_labels_ = std::move(hidden);
  source_rows_ = std::move(sources);
}

UnlabeledPool UnlabeledPool::truncated(int max_size) const {
  if (max_size < 0 || max_size >= size()) return *this;
  Matrix features = features_.topRows(max_size);
  std::vector<int> hidden(hidden_labels_.begin(), hidden_labels_.begin() + max_size);
  std::vector<int> sources(source_rows_.begin(), source_rows_.begin() + max_size);
  return UnlabeledPool(std::move(features), std::move(hidden), std::move(sources));
}

TestSet::TestSet(Matrix features, std::vector<int> labels, std::vector<int> source_rows)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      source_rows_(std::move(source_rows)) {}

std::string Split::partition_hash() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (int r : labeled.source_rows) mix(static_cast<std::uint64_t>(r));
  mix(0xffffffffffffffffULL);
  for (int i = 0; i < unlabeled.size(); ++i) mix(static_cast<std::uint64_t>(unlabeled.source_row(i)));
  mix(0xffffffffffffffffULL);
  for (int r : test.source_rows()) mix(static_cast<std::uint64_t>(r));
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Split split_dataset(const TabularDataset& data, int n_labeled, int n_test,
                    std::uint64_t seed) {
  data.validate();
  if (n_labeled < 1 || n_test < 0) throw Error("split sizes must be positive");
  if (n_labeled + n_test > data.sample_count())
    throw Error("split sizes exceed the dataset size");

  // Group labeled rows by class; rows that are already unlabeled can only go
  // to the pool.
  std::vector<std::vector<int>> by_class(data.class_count);
  std::vector<int> pre_unlabeled;
  for (int i = 0; i < data.sample_count(); ++i) {
    if (data.labels[i] == TabularDataset::kUnlabeled)
      pre_unlabeled.push_back(i);
    else
      by_class[data.labels[i]].push_back(i);
  }
  int labeled_total = data.sample_count() - static_cast<int>(pre_unlabeled.size());
  if (n_labeled + n_test > labeled_total)
    throw Error("not enough labeled rows for the requested split");

  auto gen = rng::engine(seed, /*stream=*/1);
  for (auto& group : by_class) std::shuffle(group.begin(), group.end(), gen);

  // Largest-remainder allocation of the per-class quotas.
  auto allocate = [&](int want) {
    std::vector<int> quota(data.class_count);
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int k = 0; k < data.class_count; ++k) {
      double exact = static_cast<double>(want) * by_class[k].size() / labeled_total;
      quota[k] = static_cast<int>(std::floor(exact));
      assigned += quota[k];
      remainders.push_back({exact - quota[k], k});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int i = 0; i < want - assigned; ++i) quota[remainders[i].second] += 1;
    return quota;
  };
  auto labeled_quota = allocate(n_labeled);
  auto test_quota = allocate(n_test);
  for (int k = 0; k < data.class_count; ++k) {
    if (labeled_quota[k] < 1)
      throw Error("class " + std::to_string(k) +
                  " cannot be represented in the labeled split; increase n_labeled");
    if (labeled_quota[k] + test_quota[k] > static_cast<int>(by_class[k].size()))
      throw Error("class " + std::to_string(k) + " has too few samples for stratification");
  }

  std::vector<int> labeled_rows, test_rows, pool_rows = pre_unlabeled;
  for (int k = 0; k < data.class_count; ++k) {
    const auto& group = by_class[k];
    int a = labeled_quota[k], b = a + test_quota[k];
    labeled_rows.insert(labeled_rows.end(), group.begin(), group.begin() + a);
    test_rows.insert(test_rows.end(), group.begin() + a, group.begin() + b);
    pool_rows.insert(pool_rows.end(), group.begin() + b, group.end());
  }
  std::sort(labeled_rows.begin(), labeled_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(pool_rows.begin(), pool_rows.end());

  auto take = [&](const std::vector<int>& rows, Matrix& out_features,
                  std::vector<int>& out_labels) {
    out_features.resize(static_cast<int>(rows.size()), data.feature_count());
    out_labels.clear();
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
      out_features.row(i) = data.features.row(rows[i]);
      out_labels.push_back(data.labels[rows[i]]);
    }
  };

  Split split;
  split.class_count = data.class_count;
  split.label_names = data.label_names;
  take(labeled_rows, split.labeled.features, split.labeled.labels);
  split.labeled.source_rows = labeled_rows;

  Matrix pool_features;
  std::vector<int> pool_labels;
  take(pool_rows, pool_features, pool_labels);
  split.unlabeled = UnlabeledPool(std::move(pool_features), std::move(pool_labels), pool_rows);

  Matrix test_features;
  std::vector<int> test_labels;
  take(test_rows, test_features, test_labels);
  split.test = TestSet(std::move(test_features), std::move(test_labels), test_rows);
  return split;
}

StandardScaler StandardScaler::fit(const Matrix& features) {
  StandardScaler scaler;
  scaler.mean_ = features.colwise().mean();
  const int n = static_cast<int>(features.rows());
  Matrix centered = features.rowwise() - scaler.mean_.transpose();
  scaler.scale_ = (centered.array().square().colwise().sum() / std::max(n, 1)).sqrt();
  for (int j = 0; j < scaler.scale_.size(); ++j)
    if (scaler.scale_[j] < 1e-12) scaler.scale_[j] = 1.0;  // constant column
  return scaler;
}

Matrix StandardScaler::transform(const Matrix& features) const {
  Matrix out = features.rowwise() - mean_.transpose();
  out.array().rowwise() /= scale_.transpose().array();
  return out;
}

}  // namespace csa
