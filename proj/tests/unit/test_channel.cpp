#include <doctest.h>

#include <cmath>

#include "fedlora/channel.hpp"

using namespace fedlora;

TEST_SUITE("channel") {
  TEST_CASE("fading draws") {
    RngStream rng(1);
    const FadingModel constant{FadingKind::Constant, 0.7, kDefaultHFloor};
    for (int i = 0; i < 10; ++i) CHECK(draw_channel(constant, rng) == 0.7);
    const FadingModel tiny{FadingKind::Constant, 1e-6, 1e-3};
    CHECK(draw_channel(tiny, rng) == 1e-3);

    const FadingModel rayleigh{FadingKind::RayleighUnitPower, 1.0, kDefaultHFloor};
    double second = 0.0, low = 1.0;
    for (int i = 0; i < 100000; ++i) {
      const double h = draw_channel(rayleigh, rng);
      second += h * h;
      low = std::min(low, h);
    }
    CHECK(std::abs(second / 1e5 - 1.0) <= 0.02);
    CHECK(low >= kDefaultHFloor);

    CHECK(parse_fading_kind("rayleigh") == FadingKind::RayleighUnitPower);
    CHECK(parse_fading_kind(to_string(FadingKind::Constant)) == FadingKind::Constant);
    CHECK_FALSE(parse_fading_kind("rician").has_value());
  }

  TEST_CASE("transmit and equalize") {
    RngStream rng(2);
    const Vector g{0.3, -0.4, 0.1};
    const ChannelState quiet{0.8, 0.0, 1.0, kDefaultHFloor};
    const Vector y = transmit_uplink(g, 2.0, quiet, rng);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == 0.8 * 2.0 * g[i]);
    const Vector g_hat = equalize(y, 0.8);
    for (std::size_t i = 0; i < 3; ++i) CHECK(g_hat[i] == doctest::Approx(2.0 * g[i]).epsilon(1e-15));
    CHECK(equalize(y, 1.0) == y);
    CHECK_THROWS_AS(equalize(y, 1e-4), std::domain_error);

    RngStream r1(3), r2(3);
    const ChannelState noisy{0.5, 2.0, 1.0, kDefaultHFloor};
    CHECK(transmit_uplink(g, 1.0, noisy, r1) == transmit_uplink(g, 1.0, noisy, r2));
    CHECK_THROWS_AS(transmit_uplink(g, -1.0, noisy, r1), std::invalid_argument);
  }

  TEST_CASE("pure-noise variance and equalized variance") {
    RngStream rng(4);
    const std::size_t n = 100000;
    const ChannelState ch{0.4, 1.5, 1.0, kDefaultHFloor};
    const Vector y = transmit_uplink(Vector(n), 0.0, ch, rng);
    double var = 0.0;
    for (double v : y.values()) var += v * v;
    CHECK(var / n == doctest::Approx(1.5).epsilon(0.02));

    const Vector g = sample_gaussian_vector(rng, n, 1.0);
    const Vector residual = equalize(transmit_uplink(g, 3.0, ch, rng), ch.h) - 3.0 * g;
    double mean = 0.0, sq = 0.0;
    for (double v : residual.values()) mean += v;
    mean /= n;
    for (double v : residual.values()) sq += (v - mean) * (v - mean);
    const double expect = ch.n0 / (ch.h * ch.h);
    const double se_var = expect * std::sqrt(2.0 / n);
    CHECK(std::abs(sq / (n - 1) - expect) <= 3.0 * se_var);
    CHECK(std::abs(mean) <= 3.0 * std::sqrt(expect / n));
  }

  TEST_CASE("property: noise for distinct devices is uncorrelated") {
    const RngStream root(5);
    RngStream d0 = root.child("round", 0).child("device", 0);
    RngStream d1 = root.child("round", 0).child("device", 1);
    const ChannelState ch{1.0, 1.0, 1.0, kDefaultHFloor};
    const std::size_t n = 100000;
    const Vector a = transmit_uplink(Vector(n), 0.0, ch, d0);
    const Vector b = transmit_uplink(Vector(n), 0.0, ch, d1);
    CHECK(std::abs(dot(a, b) / (a.norm() * b.norm())) <= 0.01);
  }

  TEST_CASE("snr") {
    CHECK(snr(1, 1, 1, 1) == 1.0);
    CHECK(snr(3, 2, 9, 1) == doctest::Approx(4.0));
    CHECK(snr(0, 2, 9, 1) == 0.0);
    CHECK(snr(1, 1, 4, 0.0) == kInfinity);
    CHECK(snr(0, 1, 4, 0.0) == 0.0);
    CHECK_THROWS_AS(snr(1, 1, 0, 1.0), std::invalid_argument);
  }

  TEST_CASE("power check") {
    const ChannelState ch{1.0, 1.0, 4.0, kDefaultHFloor};
    const double c = 0.01;
    CHECK(power_ok(std::sqrt(ch.p_max) / c, c, ch));
    CHECK_FALSE(power_ok(1.01 * std::sqrt(ch.p_max) / c, c, ch));
    CHECK(power_ok(0.0, c, ch));
  }
}
