#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "corefed/commands.hpp"
#include "corefed/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with fairness-aware aggregation"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string run_id;
  bool overwrite = false;
  std::string algorithms = "corefed,cofed,refed,fedavg";

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--run-id", run_id, "Run directory name (default: derived from the config hash)");
  run->add_flag("--overwrite", overwrite, "Replace an existing run directory");

  auto* sweep = app.add_subcommand("sweep", "Run several algorithms on one partition");
  sweep->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--algorithms", algorithms, "Comma-separated list of corefed,cofed,refed,fedavg");
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--run-id", run_id, "Run directory name (default: derived from the config hash)");
  sweep->add_flag("--overwrite", overwrite, "Replace an existing run directory");

  auto* validate = app.add_subcommand("validate", "Check a config and print its resolved form");
  validate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? corefed::kExitOk : corefed::kExitUsage;
  }

  try {
    if (validate->parsed()) return corefed::cmd_validate(config, std::cout, std::cerr);
    const auto id = run_id.empty() ? std::nullopt : std::optional<std::string>(run_id);
    const auto manifest = corefed::make_manifest(config, out, id);
    if (run->parsed()) return corefed::cmd_run(manifest, overwrite, std::cerr);
    return corefed::cmd_sweep(manifest, corefed::parse_algorithm_list(algorithms), overwrite, std::cerr);
  } catch (const corefed::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return corefed::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return corefed::kExitFailure;
  }
}
