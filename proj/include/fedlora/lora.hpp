#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "fedlora/numerics.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

enum class AdapterMode {
  UpdateBoth,         // vanilla LoRA: A and B trained
  FixedGaussianA,     // A ~ N(0, 1/d_in), frozen; only B trained
  FixedOrthonormalA,  // A·Aᵀ = s²·I_r, frozen; only B trained
};

std::string_view to_string(AdapterMode mode);
std::optional<AdapterMode> parse_adapter_mode(std::string_view name);

inline bool updates_a(AdapterMode mode) { return mode == AdapterMode::UpdateBoth; }

/// Low-rank pair with Δw = B·A, A: r×d_in, B: d_out×r.
struct LoraAdapter {
  Matrix a;
  Matrix b;
  AdapterMode mode = AdapterMode::UpdateBoth;
  double scale = 1.0;

  std::size_t rank() const { return a.rows(); }
  std::size_t in_dim() const { return a.cols(); }
  std::size_t out_dim() const { return b.rows(); }
  Matrix delta_w() const { return b * a; }
};

struct AdapterGrads {
  Matrix grad_a;
  Matrix grad_b;
};

/// B starts at zero so Δw(0) = 0. Requires 1 ≤ r ≤ min(d_in, d_out)/2.
LoraAdapter init_adapter(AdapterMode mode, std::size_t r, std::size_t d_in, std::size_t d_out,
                         double scale, RngStream& rng);

/// (w_frozen + B·A)·u
Vector lora_forward(const Matrix& w_frozen, const LoraAdapter& adapter, const Vector& u);

/// Bᵀ·g·uᵀ
Matrix grad_wrt_a(const Matrix& b, const Vector& g_total, const Vector& u);
/// g·uᵀ·Aᵀ
Matrix grad_wrt_b(const Vector& g_total, const Vector& u, const Matrix& a);

// Batched forms. Rows of `g_rows` and `u_rows` are paired samples; the result is
// the sum of the per-sample gradients.
Matrix grad_wrt_a(const Matrix& b, const Matrix& g_rows, const Matrix& u_rows);
Matrix grad_wrt_b(const Matrix& g_rows, const Matrix& u_rows, const Matrix& a);

/// One gradient step. Fixed-A modes ignore grad_a and leave A untouched.
LoraAdapter apply_update(const LoraAdapter& adapter, const Matrix& grad_a, const Matrix& grad_b,
                         double eta);

/// Component of Δw = B_new·A_new − B·A attributable to the noise n_v when both
/// factors take one step on g_v + n_v:
///   −η(B Bᵀ n uᵀ + n uᵀ Aᵀ A) + η²(T1 + T2 + T3)
/// with T1 = (g uᵀ Aᵀ)(Bᵀ n uᵀ), T2 = (n uᵀ Aᵀ)(Bᵀ g uᵀ), T3 = (n uᵀ Aᵀ)(Bᵀ n uᵀ).
Matrix noise_in_delta_w_both(const Matrix& a, const Matrix& b, const Vector& g_v,
                             const Vector& n_v, const Vector& u, double eta);

/// First- and second-order parts of noise_in_delta_w_both, returned separately.
struct NoiseTerms {
  Matrix first_order;   // −η(B Bᵀ n uᵀ + n uᵀ Aᵀ A)
  Matrix second_order;  // η²(T1 + T2 + T3)
};
NoiseTerms noise_terms_both(const Matrix& a, const Matrix& b, const Vector& g_v, const Vector& n_v,
                            const Vector& u, double eta);

/// −η·n_v·uᵀ·Aᵀ·A; exact when only B is trained.
Matrix noise_in_delta_w_fixed_a(const Matrix& a, const Vector& n_v, const Vector& u, double eta);

/// E‖−η n uᵀ AᵀA‖_F² for zero-mean isotropic n with the given covariance trace:
/// η²·tr(Cov)·‖AᵀA u‖².
double noise_energy_fixed_a(const Matrix& a, const Vector& u, double noise_cov_trace, double eta);

}  // namespace fedlora
