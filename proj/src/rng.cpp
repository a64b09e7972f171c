#include "fedlora/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedlora {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_key(std::uint64_t seed, const std::vector<PathLabel>& path) {
  std::uint64_t key = splitmix64(seed);
  for (const auto& label : path) {
    key = splitmix64(key ^ fnv1a(label.purpose));
    key = splitmix64(key ^ label.index);
  }
  return key;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : RngStream(seed, {}) {}

RngStream::RngStream(std::uint64_t seed, std::vector<PathLabel> path)
    : seed_(seed), path_(std::move(path)), key_(derive_key(seed, path_)), engine_(key_) {}

RngStream RngStream::child(std::string_view purpose, std::uint64_t index) const {
  auto path = path_;
  path.push_back({std::string(purpose), index});
  return RngStream(seed_, std::move(path));
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

std::uint64_t RngStream::next_u64() { return engine_(); }

std::size_t RngStream::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Matrix sample_gaussian(RngStream& rng, std::size_t rows, std::size_t cols, double std) {
  if (!(std >= 0.0)) throw std::invalid_argument("sample_gaussian: std must be >= 0");
  Matrix m(rows, cols);
  if (std == 0.0) return m;
  for (double& v : m.values()) v = std * rng.normal();
  return m;
}

Vector sample_gaussian_vector(RngStream& rng, std::size_t dim, double std) {
  if (!(std >= 0.0)) throw std::invalid_argument("sample_gaussian_vector: std must be >= 0");
  Vector v(dim);
  if (std == 0.0) return v;
  for (double& x : v.values()) x = std * rng.normal();
  return v;
}

Matrix orthonormal_rows(RngStream& rng, std::size_t r, std::size_t d, double scale) {
  if (r > d) {
    throw ShapeError("orthonormal_rows: " + std::to_string(r) + " rows cannot be orthonormal in R^" +
                     std::to_string(d));
  }
  if (!(scale > 0.0)) throw std::invalid_argument("orthonormal_rows: scale must be > 0");

  Matrix a = sample_gaussian(rng, r, d, 1.0);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < r; ++i) {
      auto ri = a.row(i);
      for (std::size_t j = 0; j < i; ++j) {
        auto rj = a.row(j);
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += ri[k] * rj[k];
        for (std::size_t k = 0; k < d; ++k) ri[k] -= proj * rj[k];
      }
      double n2 = 0.0;
      for (double v : ri) n2 += v * v;
      const double inv = 1.0 / std::sqrt(n2);
      for (double& v : ri) v *= inv;
    }
  }
  a *= scale;
  return a;
}

}  // namespace fedlora
