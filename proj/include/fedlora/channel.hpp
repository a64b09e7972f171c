#pragma once

#include <optional>
#include <string_view>

#include "fedlora/numerics.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

inline constexpr double kDefaultHFloor = 1e-3;

enum class FadingKind { Constant, RayleighUnitPower };

std::string_view to_string(FadingKind kind);
std::optional<FadingKind> parse_fading_kind(std::string_view name);

/// Block flat fading: one coefficient per (device, round), clamped at h_floor.
struct FadingModel {
  FadingKind kind = FadingKind::RayleighUnitPower;
  double h0 = 1.0;  // used by Constant
  double h_floor = kDefaultHFloor;
};

struct ChannelState {
  double h = 1.0;       // real, non-negative effective coefficient
  double n0 = 1.0;      // noise power per entry
  double p_max = 1.0;   // transmit power cap
  double h_floor = kDefaultHFloor;
};

/// Constant returns h0; Rayleigh draws |CN(0,1)| so E[h²] = 1. Result ≥ h_floor.
double draw_channel(const FadingModel& model, RngStream& rng);

/// y = h·α·g + n, n ~ N(0, N₀·I).
Vector transmit_uplink(const Vector& g_clipped, double alpha, const ChannelState& ch,
                       RngStream& rng);

/// ĝ = y / h. Throws std::domain_error when h is below the floor.
Vector equalize(const Vector& y, double h, double h_floor = kDefaultHFloor);

/// (α·C)² / (d·N₀); kInfinity when N₀ = 0.
double snr(double alpha, double clip_c, std::size_t d, double n0);

/// (α·C)² ≤ P with 1e-12 relative slack.
bool power_ok(double alpha, double clip_c, const ChannelState& ch);

}  // namespace fedlora
