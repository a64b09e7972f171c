#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/federation.hpp"

namespace fedlora {

/// Invalid configuration; the message starts with the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment grid over adapter modes × privacy budgets. Field names match the
/// JSON keys one to one.
struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  std::size_t devices = 15;
  std::size_t rounds = 30;

  std::vector<double> epsilons{3.0, 5.0, 10.0, 100.0};
  double delta = 1e-5;
  double clip = 0.01;
  double c1 = 1.0;
  Accountant accountant = Accountant::Moments;

  FadingKind fading = FadingKind::RayleighUnitPower;
  double h0 = 1.0;
  double h_floor = kDefaultHFloor;
  double n0 = 1.0;
  double p_max = 100.0;
  PowerPolicy power_policy = PowerPolicy::PrivacyAware;

  double eta = 1e-3;
  double eta_local = 0.5;
  HeadOptimizerKind head_optimizer = HeadOptimizerKind::GradientDescent;
  bool descale_gradient = true;

  std::size_t input_dim = 16;
  std::size_t width = 32;
  std::size_t layers = 2;
  std::size_t rank = 4;
  double orthonormal_scale = 0.1;
  std::size_t classes = 4;
  Activation activation = Activation::Tanh;

  std::size_t samples = 2000;
  double fraction = 0.05;
  double margin = 3.0;

  std::vector<AdapterMode> modes{AdapterMode::UpdateBoth, AdapterMode::FixedGaussianA,
                                 AdapterMode::FixedOrthonormalA};
  std::string output_dir = "results";

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// Training configuration for one grid cell.
  TrainingConfig cell(AdapterMode mode, double epsilon) const;
};

/// Unknown keys, wrong types and constraint violations raise ConfigError.
ExperimentConfig parse_config_text(std::string_view json_text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical JSON (every key, sorted, two-space indent).
std::string serialize_config(const ExperimentConfig& cfg);

/// --seed beats the config's "seed", which beats SIM_DEFAULT_SEED; else 0.
std::uint64_t resolve_seed(const ExperimentConfig& cfg, std::optional<std::uint64_t> cli_seed);

}  // namespace fedlora
