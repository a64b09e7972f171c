#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedlora/channel.hpp"
#include "fedlora/data.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/model.hpp"
#include "fedlora/privacy.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

enum class PowerPolicy {
  PrivacyAware,  // α = min(privacy cap, power cap)
  FullPower,     // α = √P/C, no privacy target
};

std::string_view to_string(PowerPolicy policy);
std::optional<PowerPolicy> parse_power_policy(std::string_view name);

/// Order in which devices run their slot work within a round. Results do not
/// depend on it; it exists so that claim can be tested.
enum class SlotOrder { Ascending, Descending, Concurrent };

/// One training run: a single (adapter mode, ε₀) cell.
struct TrainingConfig {
  ModelConfig model;
  AdapterMode mode = AdapterMode::FixedOrthonormalA;
  std::size_t devices = 15;
  std::size_t rounds = 30;

  PrivacyConfig privacy;
  PowerPolicy power_policy = PowerPolicy::PrivacyAware;
  FadingModel fading;
  double n0 = 1.0;
  double p_max = 100.0;

  double eta = 1e-3;
  double eta_local = 0.5;
  HeadOptimizerKind head_optimizer = HeadOptimizerKind::GradientDescent;
  /// Server divides the equalized gradient by α before backpropagating.
  bool descale_gradient = true;

  std::size_t samples = 2000;
  double fraction = 0.05;
  double margin = 3.0;

  SlotOrder slot_order = SlotOrder::Ascending;

  void validate() const;
};

struct DeviceState {
  std::size_t id = 0;
  Dataset shard;
  TaskHead head;
  HeadOptimizer optimizer{HeadOptimizerKind::GradientDescent, 0.0};
};

struct ServerState {
  SplitModel model;
  /// |D_k| / Σ|D_j|
  std::vector<double> weights;
};

enum class MessageKind { Features, GradientDeviation };

/// Shape of one device→server transmission, logged for auditing.
struct UplinkMessage {
  std::size_t device = 0;
  MessageKind kind = MessageKind::Features;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// ℓ2 norm of α·g̃ before the channel; zero for feature messages.
  double payload_norm = 0.0;
};

struct DeviceRoundStats {
  std::size_t device = 0;
  double h = 0.0;
  double alpha = 0.0;
  double snr = 0.0;
  Binding binding = Binding::PrivacyBound;
  double epsilon = 0.0;  // what this round's α·h alone implies over T rounds
  double local_loss = 0.0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<DeviceRoundStats> devices;
  double train_loss = 0.0;  // |D_k|-weighted mean local loss before the update
  double test_accuracy = 0.0;
  double realized_epsilon_max = 0.0;  // accountant over rounds so far, max over devices
  std::vector<UplinkMessage> uplink;

  double power_bound_fraction() const;
  double mean_snr() const;
  double mean_alpha() const;
};

/// Σ_k (|D_k|/Σ|D_j|)·grads_k, accumulated in device order.
std::vector<AdapterGrads> aggregate(std::span<const std::vector<AdapterGrads>> per_device,
                                    std::span<const double> sizes);

/// Owns server and device state for one run and executes the round protocol.
class Federation {
 public:
  Federation(TrainingConfig cfg, const SplitDataset& data, const RngStream& rng);

  RoundRecord run_round(std::size_t t);

  /// Mean test accuracy of the per-device heads under the current adapters.
  double evaluate() const;

  const TrainingConfig& config() const { return cfg_; }
  const ServerState& server() const { return server_; }
  const std::vector<DeviceState>& devices() const { return devices_; }
  const std::vector<PrivacySpend>& privacy() const { return spend_; }

  /// Replace server or device state, e.g. to start from a given point.
  ServerState& mutable_server() { return server_; }
  std::vector<DeviceState>& mutable_devices() { return devices_; }

 private:
  struct SlotResult;
  SlotResult run_slot(std::size_t k, std::size_t t) const;

  TrainingConfig cfg_;
  RngStream fading_rng_;
  RngStream noise_rng_;
  ServerState server_;
  std::vector<DeviceState> devices_;
  Dataset test_;
  std::vector<PrivacySpend> spend_;
  std::vector<std::vector<double>> alphas_, hs_;
  std::vector<std::vector<Binding>> bindings_;
};

struct TrainingResult {
  std::vector<RoundRecord> records;
  SplitModel model;
  std::vector<TaskHead> heads;
  std::vector<PrivacySpend> privacy;
};

/// Builds data and model from `rng`, then runs cfg.rounds rounds. Data, frozen
/// weights and fading draws depend only on `rng`; adapter initialisation and
/// channel noise additionally depend on the (mode, ε₀) cell.
TrainingResult run_training(const TrainingConfig& cfg, const RngStream& rng);

/// Synthetic data used by run_training for the given stream.
SplitDataset training_data(const TrainingConfig& cfg, const RngStream& rng);

}  // namespace fedlora
