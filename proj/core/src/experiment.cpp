#include "csa/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace csa {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty())
    throw ConfigError("expected a non-empty array of arrays");
  Matrix m(rows.size(), rows[0].size());
  for (int i = 0; i < m.rows(); ++i) {
    if (static_cast<int>(rows[i].size()) != m.cols())
      throw ConfigError("ragged matrix in config");
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (int i = 0; i < static_cast<int>(arr.size()); ++i) v[i] = arr[i].get<double>();
  return v;
}

RunConfig parse_run_config(const json& doc) {
  RunConfig run;
  std::string method = doc.value("method", "csa");
  auto parsed = parse_method(method);
  if (!parsed) {
    std::string valid;
    for (const auto& name : method_names()) valid += (valid.empty() ? "" : ", ") + name;
    throw ConfigError("unknown method '" + method + "'; valid methods: " + valid);
  }
  run.method = *parsed;
  run.rounds = doc.value("rounds", 5);
  run.ensemble_size = doc.value("ensemble_size", 20);
  run.epsilon = doc.value("epsilon", 0.01);
  std::string criterion = doc.value("criterion", "t_test");
  if (criterion == "t_test")
    run.criterion = ConfidenceCriterion::kTTest;
  else if (criterion == "total_variance")
    run.criterion = ConfidenceCriterion::kTotalVariance;
  else if (criterion == "entropy")
    run.criterion = ConfidenceCriterion::kEntropy;
  else
    throw ConfigError("unknown criterion '" + criterion +
                      "'; valid: t_test, total_variance, entropy");
  run.confidence.t_threshold = doc.value("t_threshold", 2.0);
  run.confidence.keep_fraction = doc.value("keep_fraction", 0.5);
  run.gamma = doc.value("gamma", 0.8);
  run.gamma_u = doc.value("gamma_u", -1.0);
  run.slack_factor = doc.value("slack_factor", 1.1);
  run.standardize = doc.value("standardize", true);
  run.sinkhorn_max_iterations = doc.value("sinkhorn_max_iterations", 1000);
  run.sinkhorn_tolerance = doc.value("sinkhorn_tolerance", 1e-6);
  if (doc.contains("hyperparameters")) {
    const json& h = doc["hyperparameters"];
    run.ranges.learning_rate_min = h.value("learning_rate_min", run.ranges.learning_rate_min);
    run.ranges.learning_rate_max = h.value("learning_rate_max", run.ranges.learning_rate_max);
    run.ranges.epochs_min = h.value("epochs_min", run.ranges.epochs_min);
    run.ranges.epochs_max = h.value("epochs_max", run.ranges.epochs_max);
    run.ranges.feature_subsample_min =
        h.value("feature_subsample_min", run.ranges.feature_subsample_min);
    run.ranges.feature_subsample_max =
        h.value("feature_subsample_max", run.ranges.feature_subsample_max);
    run.ranges.l2_min = h.value("l2_min", run.ranges.l2_min);
    run.ranges.l2_max = h.value("l2_max", run.ranges.l2_max);
    run.ranges.bootstrap = h.value("bootstrap", run.ranges.bootstrap);
  }
  try {
    run.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return run;
}

json run_config_to_json(const RunConfig& run) {
  json doc;
  doc["method"] = method_name(run.method);
  doc["rounds"] = run.rounds;
  doc["ensemble_size"] = run.ensemble_size;
  doc["epsilon"] = run.epsilon;
  doc["criterion"] = run.criterion == ConfidenceCriterion::kTTest ? "t_test"
                     : run.criterion == ConfidenceCriterion::kTotalVariance
                         ? "total_variance"
                         : "entropy";
  doc["t_threshold"] = run.confidence.t_threshold;
  doc["keep_fraction"] = run.confidence.keep_fraction;
  doc["gamma"] = run.gamma;
  doc["gamma_u"] = run.gamma_u;
  doc["slack_factor"] = run.slack_factor;
  doc["standardize"] = run.standardize;
  return doc;
}

std::string timestamp_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string dataset_label(const DatasetSource& source) {
  return source.kind == DatasetSource::Kind::kCsv ? fs::path(source.path).stem().string()
                                                  : "gaussian_mixture";
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seed list must be non-empty");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  if (n_labeled < 1 || n_test < 1) throw ConfigError("n_labeled and n_test must be >= 1");
  if (dataset.kind == DatasetSource::Kind::kCsv && !fs::exists(dataset.path))
    throw ConfigError("dataset file does not exist: " + dataset.path);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  json doc = read_json_file(path);
  ExperimentConfig config;
  try {
    const json& ds = doc.at("dataset");
    std::string type = ds.value("type", "");
    if (type == "csv") {
      config.dataset.kind = DatasetSource::Kind::kCsv;
      config.dataset.path = ds.at("path").get<std::string>();
      config.dataset.label_column = ds.value("label_column", std::string("label"));
      config.dataset.unlabeled_marker = ds.value("unlabeled_marker", std::string("?"));
    } else if (type == "gaussian_mixture") {
      config.dataset.kind = DatasetSource::Kind::kGaussianMixture;
      config.dataset.mixture.class_means = matrix_from_json(ds.at("class_means"));
      config.dataset.mixture.noise_variances = vector_from_json(ds.at("noise_variances"));
      config.dataset.mixture.samples_per_class =
          ds.at("samples_per_class").get<std::vector<int>>();
      config.dataset.mixture.validate();
    } else {
      throw ConfigError("dataset.type must be 'csv' or 'gaussian_mixture'");
    }
    const json& split = doc.at("split");
    config.n_labeled = split.at("n_labeled").get<int>();
    config.n_test = split.at("n_test").get<int>();
    config.n_unlabeled = split.value("n_unlabeled", -1);
    config.run = parse_run_config(doc.value("run", json::object()));
    config.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    config.output_dir = doc.at("output_dir").get<std::string>();
    config.save_model = doc.value("save_model", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  config.validate();
  return config;
}

namespace {

PoolState build_pools(const ExperimentConfig& config, std::uint64_t seed) {
  TabularDataset data;
  if (config.dataset.kind == DatasetSource::Kind::kCsv) {
    data = load_csv(config.dataset.path, config.dataset.label_column,
                    config.dataset.unlabeled_marker);
  } else {
    data = sample_gaussian_mixture(config.dataset.mixture, rng::derive(seed, 0xda7a));
  }
  Split split = split_dataset(data, config.n_labeled, config.n_test,
                              rng::derive(seed, 0x5917));
  if (config.n_unlabeled >= 0) split.unlabeled = split.unlabeled.truncated(config.n_unlabeled);
  PoolState pools = PoolState::from_split(split);
  return pools;
}

}  // namespace

MethodSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  MethodSummary summary;
  summary.method = method_name(config.run.method);
  summary.runs.resize(config.seeds.size());

  const int seed_count = static_cast<int>(config.seeds.size());
  int outer_workers = std::min(default_worker_count(), seed_count);
  int inner_workers = seed_count == 1 ? default_worker_count() : 1;

  parallel_for(seed_count, outer_workers, [&](int s) {
    RunConfig run = config.run;
    run.seed = config.seeds[s];
    run.workers = inner_workers;
    PoolState pools = build_pools(config, run.seed);
    summary.runs[s] = run_method(run, pools);
  });

  double mean = 0.0;
  for (int s = 0; s < seed_count; ++s) {
    const RunResult& r = summary.runs[s];
    summary.seeds.push_back({config.seeds[s], r.final_accuracy, r.partition_hash});
    mean += r.final_accuracy;
  }
  mean /= seed_count;
  double var = 0.0;
  for (const auto& s : summary.seeds) var += std::pow(s.final_accuracy - mean, 2);
  summary.mean_accuracy = mean;
  summary.std_accuracy = std::sqrt(var / seed_count);
  return summary;
}

namespace {

void write_rounds_csv(std::ofstream& out, const MethodSummary& summary,
                      const std::vector<std::uint64_t>& seeds, bool header) {
  if (header) out << "method,seed,round,metric,value\n";
  for (std::size_t s = 0; s < summary.runs.size(); ++s) {
    for (const RoundMetrics& m : summary.runs[s].rounds) {
      auto row = [&](const std::string& metric, const std::string& value) {
        out << summary.method << ',' << seeds[s] << ',' << m.round << ',' << metric << ','
            << value << "\n";
      };
      row("test_accuracy", fmt(m.test_accuracy));
      row("pseudo_label_accuracy",
          std::isnan(m.pseudo_label_accuracy) ? "" : fmt(m.pseudo_label_accuracy));
      row("accepted", std::to_string(m.accepted));
      row("assigned", std::to_string(m.assigned));
      row("skipped", m.skipped ? "1" : "0");
      row("labeled_size", std::to_string(m.labeled_size));
      row("unlabeled_size", std::to_string(m.unlabeled_size));
    }
  }
}

json summary_to_json(const MethodSummary& summary) {
  json method;
  method["method"] = summary.method;
  method["mean_accuracy"] = summary.mean_accuracy;
  method["std_accuracy"] = summary.std_accuracy;
  json seeds = json::array();
  for (const auto& s : summary.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"final_accuracy", s.final_accuracy},
                     {"partition_hash", s.partition_hash}});
  }
  method["seeds"] = seeds;
  return method;
}

json pseudo_audit_json(const MethodSummary& summary, const std::vector<std::uint64_t>& seeds) {
  json audit = json::array();
  for (std::size_t s = 0; s < summary.runs.size(); ++s) {
    json records = json::array();
    for (const PseudoRecord& r : summary.runs[s].pseudo_history) {
      records.push_back({{"source_row", r.source_row},
                         {"assigned_class", r.assigned_class},
                         {"round", r.round},
                         {"correct", r.correct}});
    }
    audit.push_back({{"seed", seeds[s]}, {"pseudo_labels", records}});
  }
  return audit;
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& files) {
  json manifest;
  manifest["generated_at"] = timestamp_now();
  manifest["files"] = files;
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

}  // namespace

int cmd_run(const std::string& config_path) {
  ExperimentConfig config = load_experiment_config(config_path);
  fs::create_directories(config.output_dir);
  MethodSummary summary = run_experiment(config);

  fs::path dir(config.output_dir);
  std::vector<std::string> files;

  std::ofstream rounds(dir / "rounds.csv");
  write_rounds_csv(rounds, summary, config.seeds, /*header=*/true);
  files.push_back("rounds.csv");

  json doc;
  doc["generated_at"] = timestamp_now();
  doc["config"] = run_config_to_json(config.run);
  doc["dataset"] = dataset_label(config.dataset);
  doc["summary"] = summary_to_json(summary);
  doc["pseudo_label_audit"] = pseudo_audit_json(summary, config.seeds);
  std::ofstream out(dir / "summary.json");
  out << doc.dump(2) << "\n";
  files.push_back("summary.json");

  if (config.save_model) {
    for (std::size_t s = 0; s < summary.runs.size(); ++s) {
      std::string name = "model_seed" + std::to_string(config.seeds[s]) + ".json";
      save_model_json(summary.runs[s].final_model, (dir / name).string());
      files.push_back(name);
    }
  }
  write_manifest(dir, files);
  return 0;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& methods) {
  ExperimentConfig config = load_experiment_config(config_path);
  if (methods.empty()) throw ConfigError("compare needs at least one method");
  std::vector<Method> parsed;
  for (const std::string& name : methods) {
    auto m = parse_method(name);
    if (!m) {
      std::string valid;
      for (const auto& v : method_names()) valid += (valid.empty() ? "" : ", ") + v;
      throw ConfigError("unknown method '" + name + "'; valid methods: " + valid);
    }
    parsed.push_back(*m);
  }
  fs::create_directories(config.output_dir);
  fs::path dir(config.output_dir);

  std::vector<MethodSummary> summaries;
  for (Method m : parsed) {
    ExperimentConfig method_config = config;
    method_config.run.method = m;
    summaries.push_back(run_experiment(method_config));
  }

  // Fairness audit: every method must have seen identical splits per seed.
  for (std::size_t s = 0; s < config.seeds.size(); ++s)
    for (const MethodSummary& summary : summaries)
      if (summary.seeds[s].partition_hash != summaries[0].seeds[s].partition_hash)
        throw Error("split mismatch across methods at seed " +
                    std::to_string(config.seeds[s]));

  std::vector<std::string> files;
  std::ofstream wide(dir / "comparison.csv");
  wide << "dataset,method,mean_accuracy,std_accuracy,seed_count\n";
  for (const MethodSummary& summary : summaries) {
    wide << dataset_label(config.dataset) << ',' << summary.method << ','
         << fmt(summary.mean_accuracy) << ',' << fmt(summary.std_accuracy) << ','
         << config.seeds.size() << "\n";
  }
  files.push_back("comparison.csv");

  std::ofstream rounds(dir / "rounds.csv");
  for (std::size_t i = 0; i < summaries.size(); ++i)
    write_rounds_csv(rounds, summaries[i], config.seeds, /*header=*/i == 0);
  files.push_back("rounds.csv");

  json doc;
  doc["generated_at"] = timestamp_now();
  doc["config"] = run_config_to_json(config.run);
  doc["dataset"] = dataset_label(config.dataset);
  json methods_json = json::array();
  for (const MethodSummary& summary : summaries) methods_json.push_back(summary_to_json(summary));
  doc["methods"] = methods_json;
  std::ofstream out(dir / "comparison.json");
  out << doc.dump(2) << "\n";
  files.push_back("comparison.json");
  write_manifest(dir, files);
  return 0;
}

namespace {

EstimationErrorSetup setup_from_json(const json& doc) {
  EstimationErrorSetup setup;
  setup.class_means = matrix_from_json(doc.at("class_means"));
  setup.noise_variances = vector_from_json(doc.at("noise_variances"));
  setup.pseudo_counts = doc.at("pseudo_counts").get<std::vector<int>>();
  setup.indicator_means = vector_from_json(doc.at("indicator_means"));
  setup.indicator_variances = vector_from_json(doc.at("indicator_variances"));
  setup.delta = doc.at("delta").get<double>();
  setup.trials = doc.value("trials", 10000);
  try {
    setup.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return setup;
}

int run_theorem1_sweep(const json& doc, const fs::path& dir) {
  std::uint64_t seed = doc.value("seed", 1ULL);
  int trials = doc.value("trials", 10000);
  std::vector<EstimationErrorSetup> setups;
  if (doc.contains("setups")) {
    for (const json& s : doc["setups"]) setups.push_back(setup_from_json(s));
  } else if (doc.contains("random")) {
    int count = doc["random"].value("count", 50);
    double min_bound = doc["random"].value("min_bound", 0.05);
    setups = random_nonvacuous_setups(count, seed, min_bound);
  } else if (doc.contains("count_grid")) {
    // One base setup swept over per-class pseudo-label counts.
    EstimationErrorSetup base = setup_from_json(doc.at("base_setup"));
    for (int count : doc["count_grid"].get<std::vector<int>>()) {
      EstimationErrorSetup setup = base;
      std::fill(setup.pseudo_counts.begin(), setup.pseudo_counts.end(), count);
      setups.push_back(setup);
    }
  } else {
    throw ConfigError("theorem1 sweep needs 'setups', 'random' or 'count_grid'");
  }

  std::ofstream out(dir / "theorem1.csv");
  out << "setup,classes,dimension,min_count,delta,bound,empirical,stderr,trials\n";
  int workers = default_worker_count();
  for (std::size_t i = 0; i < setups.size(); ++i) {
    EstimationErrorSetup setup = setups[i];
    setup.trials = trials;
    double bound = estimation_error_bound(setup);
    MonteCarloResult mc =
        estimation_error_monte_carlo(setup, rng::derive(seed, i), workers);
    out << i << ',' << setup.class_count() << ',' << setup.dimension() << ','
        << *std::min_element(setup.pseudo_counts.begin(), setup.pseudo_counts.end()) << ','
        << fmt(setup.delta) << ',' << fmt(bound) << ',' << fmt(mc.success_fraction) << ','
        << fmt(mc.standard_error) << ',' << mc.trials << "\n";
  }
  write_manifest(dir, {"theorem1.csv"});
  return 0;
}

int run_pacbayes(const json& doc, const fs::path& dir) {
  std::string model_path = doc.at("model").get<std::string>();
  if (!fs::exists(model_path)) throw ConfigError("model file does not exist: " + model_path);
  ModelSnapshot snapshot = load_model_json(model_path);

  const json& ds = doc.at("data");
  if (ds.value("type", "csv") != "csv")
    throw ConfigError("pacbayes data source must be a labeled csv");
  std::string path = ds.at("path").get<std::string>();
  if (!fs::exists(path)) throw ConfigError("data file does not exist: " + path);
  TabularDataset data = load_csv(path, ds.value("label_column", std::string("label")),
                                 ds.value("unlabeled_marker", std::string("?")));

  Matrix features = data.features;
  if (snapshot.has_scaler) {
    features = features.rowwise() - snapshot.scaler_mean.transpose();
    features.array().rowwise() /= snapshot.scaler_scale.transpose().array();
  }

  std::vector<int> rows;
  for (int i = 0; i < data.sample_count(); ++i)
    if (data.labels[i] != TabularDataset::kUnlabeled) rows.push_back(i);
  if (rows.size() < 2) throw ConfigError("pacbayes needs at least 2 labeled samples");

  const int models = snapshot.ensemble.size();
  PacBayesSetup setup;
  setup.delta = doc.value("delta", 0.05);
  setup.posterior = Vector::Constant(models, 1.0 / models);
  setup.prior = Vector::Constant(models, 1.0 / models);
  if (doc.contains("posterior")) setup.posterior = vector_from_json(doc["posterior"]);
  if (doc.contains("prior")) setup.prior = vector_from_json(doc["prior"]);

  setup.correct.resize(models, static_cast<int>(rows.size()));
  Matrix err(models, static_cast<int>(rows.size()));
  std::vector<std::vector<int>> predictions(models, std::vector<int>(rows.size()));
  std::vector<int> labels;
  for (int m = 0; m < models; ++m) {
    Matrix probs = snapshot.ensemble.members()[m].predict_proba(features);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      Eigen::Index argmax = 0;
      probs.row(rows[j]).maxCoeff(&argmax);
      predictions[m][j] = static_cast<int>(argmax);
      bool hit = static_cast<int>(argmax) == data.labels[rows[j]];
      setup.correct(m, static_cast<int>(j)) = hit ? 1.0 : 0.0;
      err(m, static_cast<int>(j)) = hit ? 0.0 : 1.0;
    }
  }
  for (int r : rows) labels.push_back(data.labels[r]);

  double mv = majority_vote_loss(predictions, setup.posterior, labels);
  double tandem = tandem_loss(err, setup.posterior);
  double tv_rhs = pac_bayes_rhs(setup, DivergenceChoice::kTotalVariation);
  double kl_rhs = pac_bayes_rhs(setup, DivergenceChoice::kKlPinsker);

  std::ofstream out(dir / "pacbayes.csv");
  out << "n_labeled,models,mv_loss,tandem_loss,tv,kl,tv_rhs,kl_rhs\n";
  out << rows.size() << ',' << models << ',' << fmt(mv) << ',' << fmt(tandem) << ','
      << fmt(total_variation(setup.posterior, setup.prior)) << ','
      << fmt(kl_divergence(setup.posterior, setup.prior)) << ',' << fmt(tv_rhs) << ','
      << fmt(kl_rhs) << "\n";
  write_manifest(dir, {"pacbayes.csv"});
  return 0;
}

}  // namespace

int cmd_theory(const std::string& subcommand, const std::string& sweep_path) {
  json doc = read_json_file(sweep_path);
  std::string output_dir;
  try {
    output_dir = doc.at("output_dir").get<std::string>();
  } catch (const json::exception&) {
    throw ConfigError("sweep config needs an output_dir");
  }
  fs::create_directories(output_dir);
  fs::path dir(output_dir);
  try {
    if (subcommand == "theorem1") return run_theorem1_sweep(doc, dir);
    if (subcommand == "pacbayes") return run_pacbayes(doc, dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid sweep config: ") + e.what());
  }
  throw ConfigError("unknown theory subcommand '" + subcommand +
                    "'; valid: theorem1, pacbayes");
}

}  // namespace csa
