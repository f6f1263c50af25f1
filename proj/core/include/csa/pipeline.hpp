#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csa/confidence.hpp"
#include "csa/dataset.hpp"
#include "csa/ensemble.hpp"
#include "csa/sinkhorn.hpp"

namespace csa {

enum class Method { kCsa, kSla, kPl, kFlexMatch, kUps, kSupervised };

std::string method_name(Method method);
std::optional<Method> parse_method(const std::string& name);
std::vector<std::string> method_names();

// Decreasing per-round allocation fractions (T-t+1)/(T+1), normalized to sum
// to one so the schedule exhausts the assignment budget across rounds.
std::vector<double> rho_schedule(int rounds);

struct RunConfig {
  Method method = Method::kCsa;
  int rounds = 5;                 // T
  int ensemble_size = 20;         // M
  double epsilon = 0.01;
  ConfidenceCriterion criterion = ConfidenceCriterion::kTTest;
  ConfidenceParams confidence;
  double gamma = 0.8;             // hard-label threshold for pl/flexmatch/ups
  double gamma_u = -1.0;          // ups variance threshold; < 0 = per-round median
  double flex_threshold_floor = 0.05;
  double slack_factor = 1.1;
  std::uint64_t seed = 0;
  HyperparameterRanges ranges;
  bool standardize = true;
  int sinkhorn_max_iterations = 1000;
  double sinkhorn_tolerance = 1e-6;
  int workers = 1;

  void validate() const;
};

struct RoundMetrics {
  int round = 0;             // 0 = before any assignment
  double test_accuracy = 0.0;
  double pseudo_label_accuracy = 0.0;  // NaN when nothing was assigned
  int accepted = 0;          // confidence-set size (csa) / candidate count
  int assigned = 0;
  bool skipped = false;      // empty confidence set, no assignment attempted
  int labeled_size = 0;
  int unlabeled_size = 0;
};

struct PseudoRecord {
  int source_row = 0;   // row in the original dataset
  int assigned_class = 0;
  int round = 0;
  bool correct = false;  // audit against the hidden label, when known
};

struct RunResult {
  RunConfig config;
  std::vector<RoundMetrics> rounds;   // rounds 0..T
  std::vector<PseudoRecord> pseudo_history;
  double final_accuracy = 0.0;
  std::string partition_hash;
  ModelSnapshot final_model;
};

// Labeled/unlabeled/test pools for one run. The unlabeled pool's hidden labels
// and the test set are quarantined behind LeakAudit.
struct PoolState {
  LabeledSet labeled;
  UnlabeledPool unlabeled;
  TestSet test;
  int class_count = 0;
  std::vector<std::string> label_names;
  std::string partition_hash;

  static PoolState from_split(const Split& split);
};

// Accuracy of the ensemble-mean argmax on the held-out set. Opens the
// evaluation scope; throws on an empty test set.
double evaluate(const EnsembleModel& ensemble, const StandardScaler* scaler,
                const TestSet& test);

// Runs one method over the pools: the supervised baseline, greedy
// pseudo-labeling variants, or transport-based allocation.
RunResult run_method(const RunConfig& config, const PoolState& pools);

}  // namespace csa
