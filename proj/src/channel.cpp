#include "fedlora/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedlora {

std::string_view to_string(FadingKind kind) {
  switch (kind) {
    case FadingKind::Constant:
      return "constant";
    case FadingKind::RayleighUnitPower:
      return "rayleigh";
  }
  return "unknown";
}

std::optional<FadingKind> parse_fading_kind(std::string_view name) {
  if (name == "constant") return FadingKind::Constant;
  if (name == "rayleigh") return FadingKind::RayleighUnitPower;
  return std::nullopt;
}

double draw_channel(const FadingModel& model, RngStream& rng) {
  double h = model.h0;
  if (model.kind == FadingKind::RayleighUnitPower) {
    // In-phase and quadrature parts each carry half the unit power.
    const double re = rng.normal() * std::sqrt(0.5);
    const double im = rng.normal() * std::sqrt(0.5);
    h = std::hypot(re, im);
  }
  return std::max(h, model.h_floor);
}

Vector transmit_uplink(const Vector& g_clipped, double alpha, const ChannelState& ch,
                       RngStream& rng) {
  if (!(ch.n0 >= 0.0)) throw std::invalid_argument("transmit_uplink: N0 must be >= 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("transmit_uplink: alpha must be >= 0");
  Vector y = (ch.h * alpha) * g_clipped;
  if (ch.n0 > 0.0) {
    const double sigma = std::sqrt(ch.n0);
    for (double& v : y.values()) v += sigma * rng.normal();
  }
  return y;
}

Vector equalize(const Vector& y, double h, double h_floor) {
  if (!(h >= h_floor)) {
    throw std::domain_error("equalize: channel coefficient " + std::to_string(h) +
                            " below floor " + std::to_string(h_floor));
  }
  return (1.0 / h) * y;
}

double snr(double alpha, double clip_c, std::size_t d, double n0) {
  if (d == 0) throw std::invalid_argument("snr: dimension must be >= 1");
  const double signal = (alpha * clip_c) * (alpha * clip_c);
  if (n0 == 0.0) return signal == 0.0 ? 0.0 : kInfinity;
  return signal / (static_cast<double>(d) * n0);
}

bool power_ok(double alpha, double clip_c, const ChannelState& ch) {
  const double power = (alpha * clip_c) * (alpha * clip_c);
  return power <= ch.p_max * (1.0 + 1e-12);
}

}  // namespace fedlora
