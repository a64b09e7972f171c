#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/numerics.hpp"

namespace fedlora {

struct PathLabel {
  std::string purpose;
  std::uint64_t index = 0;

  bool operator==(const PathLabel&) const = default;
};

/// Reproducible random stream addressed by a root seed and a label path such as
/// ("round", 3) / ("device", 7) / ("noise", 0). The engine is keyed by a hash of
/// the full path, so the draws a consumer sees depend only on where it sits in
/// the path tree and never on the order in which siblings are consumed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream child(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t key() const { return key_; }
  const std::vector<PathLabel>& path() const { return path_; }

  double normal();
  double uniform();
  std::uint64_t next_u64();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  RngStream(std::uint64_t seed, std::vector<PathLabel> path);

  std::uint64_t seed_;
  std::vector<PathLabel> path_;
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// i.i.d. N(0, std²) entries. std = 0 gives an exact zero matrix.
Matrix sample_gaussian(RngStream& rng, std::size_t rows, std::size_t cols, double std);
Vector sample_gaussian_vector(RngStream& rng, std::size_t dim, double std);

/// r×d matrix whose rows are mutually orthogonal with norm `scale`, so that
/// A·Aᵀ = scale²·I_r. Built by twice-applied modified Gram-Schmidt on Gaussian rows.
Matrix orthonormal_rows(RngStream& rng, std::size_t r, std::size_t d, double scale);

}  // namespace fedlora
