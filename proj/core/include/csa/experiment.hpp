#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csa/pipeline.hpp"
#include "csa/theory.hpp"

namespace csa {

// One experiment = one JSON config: a dataset source, split sizes, a run
// configuration and a seed list. Results land under output_dir.
struct DatasetSource {
  enum class Kind { kCsv, kGaussianMixture } kind = Kind::kGaussianMixture;
  // csv
  std::string path;
  std::string label_column = "label";
  std::string unlabeled_marker = "?";
  // gaussian mixture
  GaussianMixtureSpec mixture;
};

struct ExperimentConfig {
  DatasetSource dataset;
  int n_labeled = 0;
  int n_test = 0;
  int n_unlabeled = -1;  // optional cap on the pool; -1 = use the remainder
  RunConfig run;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  bool save_model = false;

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

struct SeedSummary {
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  std::string partition_hash;
};

struct MethodSummary {
  std::string method;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<SeedSummary> seeds;
  std::vector<RunResult> runs;
};

// Executes one method over all seeds (fanning seeds out across workers) and
// returns per-seed results in seed order.
MethodSummary run_experiment(const ExperimentConfig& config);

// `csa run <config>`: per-round long CSV + JSON summary under output_dir.
int cmd_run(const std::string& config_path);

// `csa compare <config> --methods a,b,c`: identical splits/seeds per method,
// wide comparison CSV plus the per-round long CSV.
int cmd_compare(const std::string& config_path, const std::vector<std::string>& methods);

// `csa theory theorem1|pacbayes <sweep>`: bound-vs-empirical CSV outputs.
int cmd_theory(const std::string& subcommand, const std::string& sweep_path);

}  // namespace csa
