#include "fedlora/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedlora {

std::string_view to_string(Accountant accountant) {
  switch (accountant) {
    case Accountant::Moments:
      return "moments";
    case Accountant::StrongComposition:
      return "strong_composition";
  }
  return "unknown";
}

std::optional<Accountant> parse_accountant(std::string_view name) {
  if (name == "moments") return Accountant::Moments;
  if (name == "strong_composition") return Accountant::StrongComposition;
  return std::nullopt;
}

std::string_view to_string(Binding binding) {
  return binding == Binding::PrivacyBound ? "privacy" : "power";
}

void PrivacyConfig::validate() const {
  if (!(epsilon_target > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  if (!(clip_c > 0.0)) throw std::invalid_argument("clip must be > 0");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (!(c1 > 0.0)) throw std::invalid_argument("c1 must be > 0");
}

double PrivacyConfig::effective_c1() const {
  return accountant == Accountant::StrongComposition ? 2.0 : c1;
}

double PrivacyConfig::effective_delta() const {
  return accountant == Accountant::StrongComposition ? delta / 2.0 : delta;
}

double PrivacyConfig::composition_factor() const {
  return std::sqrt(static_cast<double>(rounds) * std::log(1.0 / effective_delta()));
}

std::size_t PrivacySpend::power_bound_rounds() const {
  return static_cast<std::size_t>(
      std::count(per_round_binding.begin(), per_round_binding.end(), Binding::PowerBound));
}

Vector clip_gradient(const Vector& g, double clip_c) {
  if (!(clip_c > 0.0)) throw std::invalid_argument("clip_gradient: C must be > 0");
  const double norm = g.norm();
  if (norm <= clip_c) return g;
  return (clip_c / norm) * g;
}

double epsilon_from_snr(double c1, double h, std::size_t t_rounds, double delta, double snr,
                        std::size_t d) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("epsilon_from_snr: delta must lie in (0,1)");
  }
  if (!(c1 > 0.0) || !(h >= 0.0) || t_rounds == 0 || !(snr >= 0.0) || d == 0) {
    throw std::invalid_argument("epsilon_from_snr: inputs must be positive");
  }
  return c1 * h * std::sqrt(static_cast<double>(t_rounds) * std::log(1.0 / delta)) *
         std::sqrt(snr * static_cast<double>(d));
}

double epsilon_from_sigma(double c1, double alpha, double clip_c, double sigma_eff,
                          std::size_t t_rounds, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("epsilon_from_sigma: delta must lie in (0,1)");
  }
  if (!(sigma_eff >= 0.0)) throw std::invalid_argument("epsilon_from_sigma: sigma must be >= 0");
  const double sensitivity = alpha * clip_c;
  if (sensitivity == 0.0) return 0.0;
  if (sigma_eff == 0.0) return kInfinity;
  return c1 * sensitivity * std::sqrt(static_cast<double>(t_rounds) * std::log(1.0 / delta)) /
         sigma_eff;
}

PowerDecision power_control_alpha(const PrivacyConfig& cfg, const ChannelState& ch) {
  if (!(ch.h >= ch.h_floor)) {
    throw std::domain_error("power_control_alpha: channel below floor h=" + std::to_string(ch.h));
  }
  PowerDecision d;
  d.privacy_cap = cfg.epsilon_target * std::sqrt(ch.n0) /
                  (cfg.effective_c1() * cfg.clip_c * ch.h * cfg.composition_factor());
  d.power_cap = std::sqrt(ch.p_max) / cfg.clip_c;
  if (d.power_cap <= d.privacy_cap) {
    d.alpha = d.power_cap;
    d.binding = Binding::PowerBound;
  } else {
    d.alpha = d.privacy_cap;
    d.binding = Binding::PrivacyBound;
  }
  return d;
}

PowerDecision full_power_alpha(const PrivacyConfig& cfg, const ChannelState& ch) {
  PowerDecision d;
  d.power_cap = std::sqrt(ch.p_max) / cfg.clip_c;
  d.privacy_cap = kInfinity;
  d.alpha = d.power_cap;
  d.binding = Binding::PowerBound;
  return d;
}

PrivacySpend account_rounds(std::span<const double> alphas, std::span<const double> hs,
                            std::span<const Binding> bindings, const PrivacyConfig& cfg,
                            double n0, std::size_t device) {
  if (alphas.size() != hs.size() || alphas.size() != bindings.size()) {
    throw std::invalid_argument("account_rounds: schedule lengths differ");
  }
  const double c1 = cfg.effective_c1();
  const double factor = cfg.composition_factor();
  const double noise_std = std::sqrt(n0);

  PrivacySpend spend;
  spend.device = device;
  spend.per_round_binding.assign(bindings.begin(), bindings.end());
  double worst = 0.0;
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    const double gain = alphas[t] * hs[t];
    worst = std::max(worst, gain);
    // σ_eff = √N₀/h, so α·C/σ_eff = α·h·C/√N₀.
    const double eps = gain == 0.0   ? 0.0
                       : n0 == 0.0   ? kInfinity
                                     : c1 * gain * cfg.clip_c * factor / noise_std;
    spend.per_round_epsilon.push_back(eps);
  }
  spend.realized_epsilon = worst == 0.0 ? 0.0
                           : n0 == 0.0  ? kInfinity
                                        : c1 * worst * cfg.clip_c * factor / noise_std;
  return spend;
}

}  // namespace fedlora
