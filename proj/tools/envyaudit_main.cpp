#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "envyaudit/harness.hpp"

int main(int argc, char** argv) {
  using envyaudit::harness::ExperimentKind;

  CLI::App app{"Envy-freeness certification experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;

  const std::pair<const char*, ExperimentKind> kinds[] = {
      {"ocef-sweep", ExperimentKind::OcefSweep},
      {"audit-run", ExperimentKind::AuditRun},
      {"envy-metrics", ExperimentKind::EnvyMetrics},
      {"euu-vs-opt", ExperimentKind::EuuVsOpt},
      {"mispec-sweep", ExperimentKind::MispecificationSweep},
  };
  std::map<const CLI::App*, ExperimentKind> kind_of;
  for (const auto& [name, kind] : kinds) {
    CLI::App* cmd = app.add_subcommand(
        name, std::string("Run a ") + envyaudit::harness::to_string(kind) + " experiment");
    cmd->add_option("-c,--config", config_path, "JSON experiment config")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Override the config's master_seed");
    cmd->add_option("--out", out_dir, "Override the config's output_dir");
    cmd->add_option("--workers", workers, "Override the config's worker pool size")
        ->check(CLI::PositiveNumber);
    kind_of[cmd] = kind;
  }

  CLI11_PARSE(app, argc, argv);

  CLI::App* cmd = app.get_subcommands().front();
  const ExperimentKind kind = kind_of.at(cmd);
  try {
    envyaudit::harness::ExperimentConfig config = envyaudit::harness::load_config(config_path);
    if (config.kind != kind) {
      std::cerr << "config error: '" << config_path << "' declares experiment '"
                << envyaudit::harness::to_string(config.kind)
                << "', but this subcommand runs '" << envyaudit::harness::to_string(kind)
                << "'\n";
      return 1;
    }
    if (cmd->count("--seed") > 0) config.master_seed = seed;
    if (cmd->count("--out") > 0) config.output_dir = out_dir;
    if (cmd->count("--workers") > 0) config.workers = workers;
    envyaudit::harness::validate(config);

    for (const std::string& path : envyaudit::harness::run_experiment(config)) {
      std::cout << path << '\n';
    }
    return 0;
  } catch (const envyaudit::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
