#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedlora/channel.hpp"
#include "fedlora/numerics.hpp"

namespace fedlora {

enum class Accountant {
  Moments,            // c₁ as configured, δ as configured
  StrongComposition,  // c₁ = 2 and the δ budget split in half
};

std::string_view to_string(Accountant accountant);
std::optional<Accountant> parse_accountant(std::string_view name);

struct PrivacyConfig {
  double epsilon_target = 3.0;
  double delta = 1e-5;
  double clip_c = 0.01;
  std::size_t rounds = 30;  // uplink transmissions per device
  double c1 = 1.0;
  Accountant accountant = Accountant::Moments;

  /// Throws std::invalid_argument on a violated bound.
  void validate() const;
  double effective_c1() const;
  double effective_delta() const;
  /// √(T·ln(1/δ)) with the accountant's δ.
  double composition_factor() const;
};

enum class Binding { PrivacyBound, PowerBound };

std::string_view to_string(Binding binding);

struct PowerDecision {
  double alpha = 0.0;
  Binding binding = Binding::PrivacyBound;
  double privacy_cap = 0.0;
  double power_cap = 0.0;
};

struct PrivacySpend {
  std::size_t device = 0;
  double realized_epsilon = 0.0;
  std::vector<double> per_round_epsilon;
  std::vector<Binding> per_round_binding;

  std::size_t power_bound_rounds() const;
};

/// g·C / max(C, ‖g‖₂)
Vector clip_gradient(const Vector& g, double clip_c);

/// c₁·h·√(T ln(1/δ))·√(SNR·d)
double epsilon_from_snr(double c1, double h, std::size_t t_rounds, double delta, double snr,
                        std::size_t d);

/// c₁·α·C·√(T ln(1/δ)) / σ_eff; kInfinity when σ_eff = 0 and α > 0.
double epsilon_from_sigma(double c1, double alpha, double clip_c, double sigma_eff,
                          std::size_t t_rounds, double delta);

/// α = min{ε₀√N₀ / (c₁ C h √(T ln(1/δ))), √P / C}.
PowerDecision power_control_alpha(const PrivacyConfig& cfg, const ChannelState& ch);

/// Full transmit power regardless of the privacy target: α = √P / C.
PowerDecision full_power_alpha(const PrivacyConfig& cfg, const ChannelState& ch);

/// Realized ε over the schedule, charged at the worst round's α·h. Per-round
/// entries give the ε each round's α·h alone would imply over all T rounds.
PrivacySpend account_rounds(std::span<const double> alphas, std::span<const double> hs,
                            std::span<const Binding> bindings, const PrivacyConfig& cfg,
                            double n0, std::size_t device = 0);

}  // namespace fedlora
