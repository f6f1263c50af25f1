#include "csa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace csa {

std::string method_name(Method method) {
  switch (method) {
    case Method::kCsa: return "csa";
    case Method::kSla: return "sla";
    case Method::kPl: return "pl";
    case Method::kFlexMatch: return "flexmatch";
    case Method::kUps: return "ups";
    case Method::kSupervised: return "supervised";
  }
  throw Error("unknown method");
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : {Method::kCsa, Method::kSla, Method::kPl, Method::kFlexMatch,
                   Method::kUps, Method::kSupervised})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

std::vector<std::string> method_names() {
  return {"csa", "sla", "pl", "flexmatch", "ups", "supervised"};
}

std::vector<double> rho_schedule(int rounds) {
  if (rounds < 1) throw Error("rho schedule needs at least one round");
  std::vector<double> values(rounds);
  double total = 0.0;
  for (int t = 1; t <= rounds; ++t) {
    values[t - 1] = static_cast<double>(rounds - t + 1) / (rounds + 1);
    total += values[t - 1];
  }
  for (double& v : values) v /= total;
  return values;
}

void RunConfig::validate() const {
  if (rounds < 1) throw Error("rounds must be >= 1");
  if (ensemble_size < 1) throw Error("ensemble_size must be >= 1");
  if (epsilon <= 0) throw Error("epsilon must be positive");
  if (gamma < 0 || gamma > 1) throw Error("gamma must lie in [0, 1]");
  if (slack_factor <= 0) throw Error("slack_factor must be positive");
  ranges.validate();
}

PoolState PoolState::from_split(const Split& split) {
  PoolState pools;
  pools.labeled = split.labeled;
  pools.unlabeled = split.unlabeled;
  pools.test = split.test;
  pools.class_count = split.class_count;
  pools.label_names = split.label_names;
  pools.partition_hash = split.partition_hash();
  return pools;
}

double evaluate(const EnsembleModel& ensemble, const StandardScaler* scaler,
                const TestSet& test) {
  if (test.size() == 0) throw Error("evaluate: empty test set");
  LeakAudit::EvalScope scope;
  Matrix features = scaler ? scaler->transform(test.features()) : test.features();
  Matrix mean = mean_probabilities(ensemble.predict_tensor(features));
  int correct = 0;
  for (int i = 0; i < mean.rows(); ++i) {
    Eigen::Index argmax = 0;
    mean.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == test.labels()[i]) ++correct;
  }
  return static_cast<double>(correct) / test.size();
}

namespace {

struct Candidate {
  int pool_row;
  int label;
};

// Greedy selection for pl / flexmatch / ups over the mean probabilities.
std::vector<Candidate> greedy_assign(const RunConfig& config, const Matrix& mean_probs,
                                     const PredictionTensor& tensor) {
  const int n = static_cast<int>(mean_probs.rows());
  const int k = static_cast<int>(mean_probs.cols());
  std::vector<int> argmax(n);
  std::vector<double> top(n);
  for (int i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    top[i] = mean_probs.row(i).maxCoeff(&best);
    argmax[i] = static_cast<int>(best);
  }

  std::vector<double> threshold(k, config.gamma);
  if (config.method == Method::kFlexMatch) {
    // Class difficulty = how many confident argmax hits it collects; easier
    // classes keep the full threshold, harder ones get a scaled-down one.
    std::vector<int> hits(k, 0);
    for (int i = 0; i < n; ++i)
      if (top[i] >= config.gamma) ++hits[argmax[i]];
    int max_hits = *std::max_element(hits.begin(), hits.end());
    for (int c = 0; c < k; ++c) {
      double scaled = max_hits > 0
                          ? config.gamma * static_cast<double>(hits[c]) / max_hits
                          : config.gamma;
      threshold[c] = std::max(scaled, config.flex_threshold_floor);
    }
  }

  double variance_cap = std::numeric_limits<double>::infinity();
  std::vector<double> variances;
  if (config.method == Method::kUps) {
    variances.resize(n);
    for (int i = 0; i < n; ++i) variances[i] = total_variance(tensor, i);
    if (config.gamma_u >= 0) {
      variance_cap = config.gamma_u;
    } else {
      std::vector<double> sorted = variances;
      std::sort(sorted.begin(), sorted.end());
      variance_cap = sorted.empty() ? 0.0 : sorted[(sorted.size() - 1) / 2];  // median
    }
  }

  std::vector<Candidate> chosen;
  for (int i = 0; i < n; ++i) {
    if (top[i] < threshold[argmax[i]]) continue;
    if (config.method == Method::kUps && variances[i] > variance_cap) continue;
    chosen.push_back({i, argmax[i]});
  }
  return chosen;
}

// Transport-based selection for csa / sla.
std::vector<Candidate> transport_assign(const RunConfig& config, const Matrix& mean_probs,
                                        const std::vector<int>& accepted,
                                        const std::vector<int>& labeled_labels,
                                        int class_count, double rho, int* out_accepted) {
  *out_accepted = static_cast<int>(accepted.size());
  if (accepted.empty()) return {};

  Matrix probs(accepted.size(), class_count);
  for (int i = 0; i < static_cast<int>(accepted.size()); ++i)
    probs.row(i) = mean_probs.row(accepted[i]);
  Matrix cost = -clamp_probabilities(probs).array().log();

  ClassFrequencyBounds bounds =
      estimate_bounds(labeled_labels, class_count, config.slack_factor);
  if (config.method == Method::kSla) bounds.w_minus.setZero();

  AugmentedProblem problem = build_augmented_problem(cost, bounds, rho);
  SinkhornOptions options;
  options.epsilon = config.epsilon;
  options.max_iterations = config.sinkhorn_max_iterations;
  options.tolerance = config.sinkhorn_tolerance;
  AssignmentMatrix solution = sinkhorn_solve(problem.cost, problem.marginals, options);

  std::vector<Candidate> chosen;
  for (const PseudoLabel& p :
       extract_assignments(solution.coupling, problem.real_rows(), problem.real_cols()))
    chosen.push_back({accepted[p.sample], p.label});
  return chosen;
}

}  // namespace

RunResult run_method(const RunConfig& config, const PoolState& pools) {
  config.validate();
  if (pools.labeled.size() == 0) throw Error("run: empty labeled pool");

  RunResult result;
  result.config = config;
  result.partition_hash = pools.partition_hash;

  Matrix labeled_features = pools.labeled.features;
  std::vector<int> labeled_labels = pools.labeled.labels;
  std::vector<int> labeled_sources = pools.labeled.source_rows;
  UnlabeledPool pool = pools.unlabeled;
  const int class_count = pools.class_count;

  // Standardization statistics come from the initial labeled set only.
  StandardScaler scaler;
  if (config.standardize) scaler = StandardScaler::fit(labeled_features);
  const StandardScaler* scaler_ptr = config.standardize ? &scaler : nullptr;
  auto transform = [&](const Matrix& m) { return config.standardize ? scaler.transform(m) : m; };

  auto fit_current = [&](int round) {
    auto specs = sample_specs(config.ensemble_size, config.ranges,
                              rng::derive(config.seed, 0x100 + round));
    return EnsembleModel::fit(specs, transform(labeled_features), labeled_labels,
                              class_count, config.workers);
  };

  const int rounds = config.method == Method::kSupervised ? 0 : config.rounds;
  std::vector<double> schedule = rho_schedule(std::max(rounds, 1));
  EnsembleModel ensemble = fit_current(0);

  {
    RoundMetrics baseline;
    baseline.round = 0;
    baseline.test_accuracy = evaluate(ensemble, scaler_ptr, pools.test);
    baseline.pseudo_label_accuracy = std::numeric_limits<double>::quiet_NaN();
    baseline.labeled_size = static_cast<int>(labeled_labels.size());
    baseline.unlabeled_size = pool.size();
    result.rounds.push_back(baseline);
  }

  for (int round = 1; round <= rounds; ++round) {
    RoundMetrics metrics;
    metrics.round = round;
    std::vector<Candidate> chosen;
    int accepted_count = 0;

    if (pool.size() > 0) {
      PredictionTensor tensor = ensemble.predict_tensor(transform(pool.features()),
                                                        config.workers);
      Matrix mean_probs = mean_probabilities(tensor);
      switch (config.method) {
        case Method::kCsa: {
          ConfidenceReport report = compute_confidence(tensor);
          std::vector<int> accepted =
              select_confident(report, config.criterion, config.confidence);
          chosen = transport_assign(config, mean_probs, accepted, labeled_labels,
                                    class_count, schedule[round - 1], &accepted_count);
          metrics.skipped = accepted.empty();
          break;
        }
        case Method::kSla: {
          std::vector<int> all(pool.size());
          std::iota(all.begin(), all.end(), 0);
          chosen = transport_assign(config, mean_probs, all, labeled_labels, class_count,
                                    schedule[round - 1], &accepted_count);
          break;
        }
        case Method::kPl:
        case Method::kFlexMatch:
        case Method::kUps:
          chosen = greedy_assign(config, mean_probs, tensor);
          accepted_count = static_cast<int>(chosen.size());
          break;
        case Method::kSupervised:
          break;
      }
    } else {
      metrics.skipped = true;
    }

    metrics.accepted = accepted_count;
    metrics.assigned = static_cast<int>(chosen.size());

    if (!chosen.empty()) {
      // Audit pseudo-label quality against the hidden truth, then augment.
      int audited = 0, correct = 0;
      {
        LeakAudit::EvalScope scope;
        for (const Candidate& c : chosen) {
          int truth = pool.hidden_label(c.pool_row);
          bool hit = truth != TabularDataset::kUnlabeled && truth == c.label;
          result.pseudo_history.push_back(
              {pool.source_row(c.pool_row), c.label, round, hit});
          if (truth != TabularDataset::kUnlabeled) {
            ++audited;
            if (hit) ++correct;
          }
        }
      }
      metrics.pseudo_label_accuracy =
          audited > 0 ? static_cast<double>(correct) / audited
                      : std::numeric_limits<double>::quiet_NaN();

      Matrix grown(labeled_features.rows() + chosen.size(), labeled_features.cols());
      grown.topRows(labeled_features.rows()) = labeled_features;
      std::vector<int> removed;
      for (int i = 0; i < static_cast<int>(chosen.size()); ++i) {
        grown.row(labeled_features.rows() + i) = pool.features().row(chosen[i].pool_row);
        labeled_labels.push_back(chosen[i].label);
        labeled_sources.push_back(pool.source_row(chosen[i].pool_row));
        removed.push_back(chosen[i].pool_row);
      }
      labeled_features = std::move(grown);
      pool.remove(removed);

      for (int k = 0; k < class_count; ++k)
        if (std::count(labeled_labels.begin(), labeled_labels.end(), k) == 0)
          throw Error("class " + std::to_string(k) + " empty after augmentation");
    } else {
      metrics.pseudo_label_accuracy = std::numeric_limits<double>::quiet_NaN();
    }

    ensemble = fit_current(round);
    metrics.test_accuracy = evaluate(ensemble, scaler_ptr, pools.test);
    metrics.labeled_size = static_cast<int>(labeled_labels.size());
    metrics.unlabeled_size = pool.size();
    result.rounds.push_back(metrics);
  }

  result.final_accuracy = result.rounds.back().test_accuracy;
  result.final_model.ensemble = ensemble;
  result.final_model.class_count = class_count;
  result.final_model.label_names = pools.label_names;
  result.final_model.has_scaler = config.standardize;
  if (config.standardize) {
    result.final_model.scaler_mean = scaler.mean();
    result.final_model.scaler_scale = scaler.scale();
  }
  return result;
}

}  // namespace csa
