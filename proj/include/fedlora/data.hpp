#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedlora/model.hpp"
#include "fedlora/numerics.hpp"

namespace fedlora {

struct Dataset {
  Matrix features;  // one row per example
  std::vector<Label> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_histogram() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Isotropic unit-variance Gaussian mixture with one component per class. When
/// classes ≤ d_x the means sit on distinct axes so every pair is exactly `margin`
/// apart; otherwise they lie on random directions at radius margin/2. Each class
/// is split 80/20 into train/test.
SplitDataset generate(std::uint64_t seed, std::size_t n, std::size_t d_x, std::size_t classes,
                      double margin);

/// Indices into a device's training subset.
using Shard = std::vector<std::size_t>;

/// Each of `k_devices` shards holds ⌊fraction·n⌋ distinct examples, drawn as evenly
/// across classes as availability allows. Shards may overlap each other.
std::vector<Shard> partition(const Dataset& ds, std::size_t k_devices, double fraction,
                             std::uint64_t seed);

void write_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path, std::size_t classes);

}  // namespace fedlora
