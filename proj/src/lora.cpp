#include "fedlora/lora.hpp"

#include <cmath>

namespace fedlora {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// Aᵀ·(A·u), computed without forming AᵀA.
Vector gram_apply(const Matrix& a, const Vector& u) { return a.transposed() * (a * u); }

}  // namespace

std::string_view to_string(AdapterMode mode) {
  switch (mode) {
    case AdapterMode::UpdateBoth:
      return "update_both";
    case AdapterMode::FixedGaussianA:
      return "fixed_gaussian_a";
    case AdapterMode::FixedOrthonormalA:
      return "fixed_orthonormal_a";
  }
  return "unknown";
}

std::optional<AdapterMode> parse_adapter_mode(std::string_view name) {
  for (auto mode : {AdapterMode::UpdateBoth, AdapterMode::FixedGaussianA,
                    AdapterMode::FixedOrthonormalA}) {
    if (to_string(mode) == name) return mode;
  }
  return std::nullopt;
}

LoraAdapter init_adapter(AdapterMode mode, std::size_t r, std::size_t d_in, std::size_t d_out,
                         double scale, RngStream& rng) {
  const std::size_t limit = std::min(d_in, d_out) / 2;
  if (r == 0 || r > limit) {
    throw ShapeError("init_adapter: rank " + std::to_string(r) + " outside [1, " +
                     std::to_string(limit) + "] for a " + std::to_string(d_out) + "x" +
                     std::to_string(d_in) + " layer");
  }
  LoraAdapter adapter;
  adapter.mode = mode;
  adapter.b = Matrix(d_out, r);
  if (mode == AdapterMode::FixedOrthonormalA) {
    if (!(scale > 0.0)) throw std::invalid_argument("init_adapter: orthonormal scale must be > 0");
    adapter.scale = scale;
    adapter.a = orthonormal_rows(rng, r, d_in, scale);
  } else {
    adapter.scale = 1.0;
    adapter.a = sample_gaussian(rng, r, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
  }
  return adapter;
}

Vector lora_forward(const Matrix& w_frozen, const LoraAdapter& adapter, const Vector& u) {
  check(w_frozen.cols() == u.dim() && adapter.in_dim() == u.dim() &&
            adapter.out_dim() == w_frozen.rows(),
        "lora_forward: inconsistent shapes");
  Vector v = w_frozen * u;
  v += adapter.b * (adapter.a * u);
  return v;
}

Matrix grad_wrt_a(const Matrix& b, const Vector& g_total, const Vector& u) {
  check(b.rows() == g_total.dim(), "grad_wrt_a: B rows must equal gradient dim");
  return outer(b.transposed() * g_total, u);
}

Matrix grad_wrt_b(const Vector& g_total, const Vector& u, const Matrix& a) {
  check(a.cols() == u.dim(), "grad_wrt_b: A columns must equal input dim");
  return outer(g_total, a * u);
}

Matrix grad_wrt_a(const Matrix& b, const Matrix& g_rows, const Matrix& u_rows) {
  check(b.rows() == g_rows.cols(), "grad_wrt_a: B rows must equal gradient dim");
  check(g_rows.rows() == u_rows.rows(), "grad_wrt_a: batch sizes differ");
  // Bᵀ Gᵀ U = (G B)ᵀ U
  return transpose_times(g_rows * b, u_rows);
}

Matrix grad_wrt_b(const Matrix& g_rows, const Matrix& u_rows, const Matrix& a) {
  check(a.cols() == u_rows.cols(), "grad_wrt_b: A columns must equal input dim");
  check(g_rows.rows() == u_rows.rows(), "grad_wrt_b: batch sizes differ");
  // Gᵀ U Aᵀ = Gᵀ (U Aᵀ)
  return transpose_times(g_rows, times_transpose(u_rows, a));
}

LoraAdapter apply_update(const LoraAdapter& adapter, const Matrix& grad_a, const Matrix& grad_b,
                         double eta) {
  LoraAdapter next = adapter;
  next.b -= eta * grad_b;
  if (updates_a(adapter.mode)) next.a -= eta * grad_a;
  return next;
}

NoiseTerms noise_terms_both(const Matrix& a, const Matrix& b, const Vector& g_v, const Vector& n_v,
                            const Vector& u, double eta) {
  check(b.rows() == n_v.dim() && g_v.dim() == n_v.dim(), "noise_terms_both: output dims");
  check(a.cols() == u.dim() && a.rows() == b.cols(), "noise_terms_both: factor shapes");

  const Vector au = a * u;              // A u       (r)
  const Vector bt_n = b.transposed() * n_v;  // Bᵀ n   (r)
  const Vector bt_g = b.transposed() * g_v;  // Bᵀ g   (r)
  const Vector ata_u = gram_apply(a, u);

  NoiseTerms terms;
  // B Bᵀ n uᵀ + n (AᵀA u)ᵀ
  terms.first_order = outer(b * bt_n, u) + outer(n_v, ata_u);
  terms.first_order *= -eta;

  // (x (Au)ᵀ)(y uᵀ) = (Au·y) x uᵀ
  const double au_bt_n = dot(au, bt_n);
  const double au_bt_g = dot(au, bt_g);
  Vector lead = au_bt_n * g_v;   // T1
  lead += au_bt_g * n_v;         // T2
  lead += au_bt_n * n_v;         // T3
  terms.second_order = outer(lead, u);
  terms.second_order *= eta * eta;
  return terms;
}

Matrix noise_in_delta_w_both(const Matrix& a, const Matrix& b, const Vector& g_v,
                             const Vector& n_v, const Vector& u, double eta) {
  auto terms = noise_terms_both(a, b, g_v, n_v, u, eta);
  return terms.first_order + terms.second_order;
}

Matrix noise_in_delta_w_fixed_a(const Matrix& a, const Vector& n_v, const Vector& u, double eta) {
  check(a.cols() == u.dim(), "noise_in_delta_w_fixed_a: A columns must equal input dim");
  Matrix out = outer(n_v, gram_apply(a, u));
  out *= -eta;
  return out;
}

double noise_energy_fixed_a(const Matrix& a, const Vector& u, double noise_cov_trace, double eta) {
  check(a.cols() == u.dim(), "noise_energy_fixed_a: A columns must equal input dim");
  if (!(noise_cov_trace >= 0.0)) {
    throw std::invalid_argument("noise_energy_fixed_a: covariance trace must be >= 0");
  }
  return eta * eta * noise_cov_trace * gram_apply(a, u).squared_norm();
}

}  // namespace fedlora
