// fedlora-sim: run, validate and summarize experiment grids.
//
//   fedlora-sim run --config grid.json [--seed N] [--out DIR] [--jobs J]
//   fedlora-sim validate --config grid.json
//   fedlora-sim summarize --in DIR

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedlora/config.hpp"
#include "fedlora/grid.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Split federated LoRA fine-tuning over noisy wireless uplinks"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t jobs = 1;
  auto* run = app.add_subcommand("run", "Run every (mode, epsilon) cell of a config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Root seed (default: config, then SIM_DEFAULT_SEED, then 0)");
  run->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  run->add_option("--jobs", jobs, "Cells to run in parallel")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  std::string in_dir;
  auto* summarize = app.add_subcommand("summarize", "Rebuild summary.json from a run directory");
  summarize->add_option("--in", in_dir, "Directory written by `run`")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? fedlora::kExitOk : fedlora::kExitConfigError;
  }

  try {
    if (*validate) {
      const auto cfg = fedlora::parse_config(config_path);
      std::cout << fedlora::serialize_config(cfg);
      return fedlora::kExitOk;
    }
    if (*run) {
      const auto cfg = fedlora::parse_config(config_path);
      fedlora::GridOptions opts;
      opts.out_dir = out_dir.empty() ? cfg.output_dir : out_dir;
      opts.seed = fedlora::resolve_seed(cfg, seed);
      opts.jobs = jobs;
      const int code = fedlora::run_grid(cfg, opts, std::cerr);
      if (code == fedlora::kExitOk) std::cerr << "results in " << opts.out_dir.string() << "\n";
      return code;
    }
    if (*summarize) {
      std::cout << fedlora::summarize_directory(in_dir);
      return fedlora::kExitOk;
    }
  } catch (const fedlora::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return fedlora::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fedlora::kExitRuntimeFailure;
  }
  return fedlora::kExitOk;
}
