// Command-line front end: run configured experiments, compare methods on
// identical splits, and execute theory sweeps. Exit codes: 0 success,
// 1 runtime failure, 2 configuration error.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csa/experiment.hpp"

namespace {

std::vector<std::string> split_csv_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-filtered optimal-transport pseudo-labeling toolkit"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run = app.add_subcommand("run", "Run one method over all seeds in a config");
  run->add_option("config", run_config, "experiment config (JSON)")->required();

  std::string compare_config;
  std::string methods_arg;
  CLI::App* compare =
      app.add_subcommand("compare", "Run several methods on identical splits and seeds");
  compare->add_option("config", compare_config, "experiment config (JSON)")->required();
  compare->add_option("--methods", methods_arg, "comma-separated method list")->required();

  CLI::App* theory = app.add_subcommand("theory", "Bound-vs-empirical sweeps");
  std::string theorem1_config, pacbayes_config;
  CLI::App* theorem1 = theory->add_subcommand("theorem1", "estimation-error bound sweep");
  theorem1->add_option("sweep", theorem1_config, "sweep config (JSON)")->required();
  CLI::App* pacbayes = theory->add_subcommand("pacbayes", "ensemble PAC-Bayes bound report");
  pacbayes->add_option("sweep", pacbayes_config, "sweep config (JSON)")->required();
  theory->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return csa::cmd_run(run_config);
    if (*compare) return csa::cmd_compare(compare_config, split_csv_list(methods_arg));
    if (*theorem1) return csa::cmd_theory("theorem1", theorem1_config);
    if (*pacbayes) return csa::cmd_theory("pacbayes", pacbayes_config);
  } catch (const csa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
