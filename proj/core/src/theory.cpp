#include "csa/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace csa {

void EstimationErrorSetup::validate() const {
  const int k = class_count();
  if (k < 2) throw Error("setup needs at least 2 classes");
  if (dimension() < 1) throw Error("setup needs at least one dimension");
  if (noise_variances.size() != dimension())
    throw Error("noise_variances length must match the dimension");
  if ((noise_variances.array() <= 0).any())
    throw Error("noise variances must be strictly positive");
  if (static_cast<int>(pseudo_counts.size()) != k || indicator_means.size() != k ||
      indicator_variances.size() != k)
    throw Error("per-class fields must have length K");
  for (int c : pseudo_counts)
    if (c < 1) throw Error("pseudo counts must be >= 1");
  for (int i = 0; i < k; ++i) {
    double mean = indicator_means[i];
    if (mean < 0 || mean > 1) throw Error("indicator means must lie in [0, 1]");
    if (indicator_variances[i] < 0) throw Error("indicator variances must be nonnegative");
    if (indicator_variances[i] > mean * (1 - mean) + 1e-12)
      throw Error("indicator variance exceeds the Bernoulli bound");
  }
  if (delta <= 0) throw Error("delta must be positive");
  if (trials < 1) throw Error("trials must be >= 1");
}

namespace {

// Mean L1 distance from mu_k to the other class means: the wrong-class draw is
// uniform over the remaining classes, so the bound term averages accordingly.
double mean_other_class_distance(const Matrix& means, int k) {
  const int class_count = static_cast<int>(means.rows());
  double total = 0.0;
  for (int j = 0; j < class_count; ++j) {
    if (j == k) continue;
    total += (means.row(k) - means.row(j)).cwiseAbs().sum();
  }
  return total / (class_count - 1);
}

}  // namespace

double estimation_error_bound(const EstimationErrorSetup& setup) {
  setup.validate();
  const int class_count = setup.class_count();
  const int dim = setup.dimension();
  const double delta2 = setup.delta * setup.delta;
  double gaussian_term = 0.0;
  for (int k = 0; k < class_count; ++k)
    for (int j = 0; j < dim; ++j)
      gaussian_term +=
          std::exp(-delta2 * setup.pseudo_counts[k] / (8.0 * setup.noise_variances[j]));
  double indicator_term = 0.0;
  for (int k = 0; k < class_count; ++k)
    indicator_term += 4.0 * setup.indicator_variances[k] / delta2 *
                      mean_other_class_distance(setup.class_means, k);
  return 1.0 - 2.0 * gaussian_term - indicator_term;
}

MonteCarloResult estimation_error_monte_carlo(const EstimationErrorSetup& setup,
                                              std::uint64_t seed, int workers) {
  setup.validate();
  const int class_count = setup.class_count();
  const int dim = setup.dimension();
  Vector noise_scale = setup.noise_variances.array().sqrt();

  std::vector<char> success(setup.trials, 0);
  parallel_for(setup.trials, workers, [&](int trial) {
    auto gen = rng::engine(seed, 0x7e0 + static_cast<std::uint64_t>(trial));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double total_error = 0.0;
    for (int k = 0; k < class_count; ++k) {
      Vector estimate = Vector::Zero(dim);
      const int count = setup.pseudo_counts[k];
      for (int i = 0; i < count; ++i) {
        bool correct = unit(gen) < setup.indicator_means[k];
        int source = k;
        if (!correct) {
          // wrong samples come from a uniformly drawn other class
          int offset = std::min(class_count - 2,
                                static_cast<int>(unit(gen) * (class_count - 1)));
          source = offset >= k ? offset + 1 : offset;
        }
        for (int j = 0; j < dim; ++j) {
          double z = setup.class_means(k, j) + noise_scale[j] * normal(gen);
          double value = correct ? z : (setup.class_means(source, j) - setup.class_means(k, j)) + z;
          estimate[j] += value;
        }
      }
      estimate /= static_cast<double>(count);
      total_error += (estimate - setup.class_means.row(k).transpose()).cwiseAbs().sum();
    }
    success[trial] = total_error <= setup.delta ? 1 : 0;
  });

  MonteCarloResult result;
  result.trials = setup.trials;
  long hits = std::count(success.begin(), success.end(), 1);
  result.success_fraction = static_cast<double>(hits) / setup.trials;
  result.standard_error = std::sqrt(
      std::max(result.success_fraction * (1.0 - result.success_fraction), 1e-12) / setup.trials);
  return result;
}

std::vector<EstimationErrorSetup> random_nonvacuous_setups(int count, std::uint64_t seed,
                                                           double min_bound) {
  std::vector<EstimationErrorSetup> setups;
  auto gen = rng::engine(seed, 0x5e1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> class_pick(2, 4);
  std::uniform_int_distribution<int> dim_pick(1, 3);
  int attempts = 0;
  while (static_cast<int>(setups.size()) < count && attempts < count * 1000) {
    ++attempts;
    EstimationErrorSetup setup;
    const int k = class_pick(gen);
    const int d = dim_pick(gen);
    setup.class_means.resize(k, d);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < d; ++j) setup.class_means(i, j) = 4.0 * unit(gen) - 2.0;
    setup.noise_variances.resize(d);
    for (int j = 0; j < d; ++j) setup.noise_variances[j] = 0.2 + 1.3 * unit(gen);
    setup.pseudo_counts.assign(k, 0);
    for (int i = 0; i < k; ++i) setup.pseudo_counts[i] = 40 + static_cast<int>(260 * unit(gen));
    setup.indicator_means.resize(k);
    setup.indicator_variances.resize(k);
    for (int i = 0; i < k; ++i) {
      double mean = 0.95 + 0.05 * unit(gen);
      setup.indicator_means[i] = mean;
      setup.indicator_variances[i] = mean * (1.0 - mean);  // Bernoulli indicators
    }
    setup.delta = 0.8 + 1.7 * unit(gen);
    setup.trials = 10000;
    if (estimation_error_bound(setup) >= min_bound) setups.push_back(setup);
  }
  if (static_cast<int>(setups.size()) < count)
    throw Error("could not generate enough non-vacuous setups");
  return setups;
}

double tandem_loss(const Matrix& err, const Vector& posterior) {
  const int models = static_cast<int>(err.rows());
  const int samples = static_cast<int>(err.cols());
  if (posterior.size() != models) throw Error("posterior length must match model count");
  if (samples < 1) throw Error("tandem loss needs at least one sample");
  double loss = 0.0;
  for (int a = 0; a < models; ++a)
    for (int b = 0; b < models; ++b)
      loss += posterior[a] * posterior[b] * err.row(a).dot(err.row(b)) / samples;
  return loss;
}

double majority_vote_loss(const std::vector<std::vector<int>>& member_predictions,
                          const Vector& posterior, const std::vector<int>& labels) {
  const int models = static_cast<int>(member_predictions.size());
  if (models < 1 || posterior.size() != models)
    throw Error("majority vote needs matching predictions and posterior");
  const int samples = static_cast<int>(labels.size());
  int errors = 0;
  for (int i = 0; i < samples; ++i) {
    int max_class = 0;
    for (int m = 0; m < models; ++m)
      max_class = std::max(max_class, member_predictions[m].at(i));
    std::vector<double> votes(max_class + 1, 0.0);
    for (int m = 0; m < models; ++m) votes[member_predictions[m][i]] += posterior[m];
    int winner = 0;
    for (int c = 1; c <= max_class; ++c)
      if (votes[c] > votes[winner]) winner = c;  // ties keep the lower index
    if (winner != labels[i]) ++errors;
  }
  return static_cast<double>(errors) / samples;
}

double total_variation(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw Error("distribution lengths differ");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw Error("distribution lengths differ");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

void PacBayesSetup::validate() const {
  const int models = static_cast<int>(correct.rows());
  if (models < 1) throw Error("setup needs at least one model");
  if (posterior.size() != models || prior.size() != models)
    throw Error("posterior/prior lengths must match the model count");
  if (std::abs(posterior.sum() - 1.0) > 1e-9 || std::abs(prior.sum() - 1.0) > 1e-9)
    throw Error("posterior and prior must sum to 1");
  if ((posterior.array() < 0).any() || (prior.array() < 0).any())
    throw Error("posterior and prior must be nonnegative");
  if (delta <= 0 || delta >= 1) throw Error("delta must lie in (0, 1)");
  if (labeled_count() < 2) throw Error("PAC-Bayes bound needs at least 2 labeled samples");
}

double pac_bayes_rhs(const PacBayesSetup& setup, DivergenceChoice divergence,
                     bool misclassification) {
  setup.validate();
  const double n = setup.labeled_count();
  double first_term = 0.0;
  for (int m = 0; m < setup.correct.rows(); ++m) {
    double mean_correct = setup.correct.row(m).mean();
    double indicator_mean = misclassification ? 1.0 - mean_correct : mean_correct;
    first_term += setup.posterior[m] * 4.0 * indicator_mean;
  }
  double gamma = divergence == DivergenceChoice::kTotalVariation
                     ? total_variation(setup.posterior, setup.prior)
                     : std::sqrt(0.5 * kl_divergence(setup.posterior, setup.prior));
  return first_term + std::sqrt((8.0 * gamma + 8.0 * std::log(n / setup.delta)) / (n - 1.0));
}

}  // namespace csa
