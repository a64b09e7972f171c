#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedlora/config.hpp"
#include "fedlora/federation.hpp"

namespace fedlora {

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeFailure = 3;

/// One CSV row: metrics after an epoch (one round per epoch).
struct EpochRow {
  AdapterMode mode = AdapterMode::UpdateBoth;
  double epsilon_target = 0.0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double realized_epsilon_max = 0.0;
  double power_bound_fraction = 0.0;
  double mean_snr = 0.0;
  double mean_alpha = 0.0;
};

std::vector<EpochRow> epoch_rows(AdapterMode mode, double epsilon,
                                 const std::vector<RoundRecord>& records);

std::string csv_header();
std::string format_csv(const std::vector<EpochRow>& rows);
std::vector<EpochRow> parse_csv(const std::string& text);

/// File stem for a cell, e.g. "fixed_orthonormal_a_eps3".
std::string cell_name(AdapterMode mode, double epsilon);

struct CellSummary {
  AdapterMode mode = AdapterMode::UpdateBoth;
  double epsilon_target = 0.0;
  std::string csv;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  std::size_t epochs_to_best = 0;
  double realized_epsilon_max = 0.0;
  std::size_t privacy_bound_count = 0;
  std::size_t power_bound_count = 0;
};

/// `devices` converts per-epoch binding fractions back to counts.
CellSummary summarize_rows(const std::vector<EpochRow>& rows, std::size_t devices);
CellSummary summarize(AdapterMode mode, double epsilon, const std::vector<RoundRecord>& records,
                      std::size_t devices);

/// JSON document: per-cell metrics plus the cross-mode accuracy ordering at each ε.
std::string summary_json(const std::vector<CellSummary>& cells);

struct GridOptions {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Runs every (mode, ε) cell, writing <cell>.csv per cell plus config.json,
/// summary.json and MANIFEST. Returns kExitOk or kExitRuntimeFailure.
int run_grid(const ExperimentConfig& cfg, const GridOptions& opts, std::ostream& log);

/// Rebuilds summary.json from the CSVs listed in a run directory's MANIFEST.
/// Returns the JSON text.
std::string summarize_directory(const std::filesystem::path& dir);

}  // namespace fedlora
