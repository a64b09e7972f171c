#include "fedlora/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fedlora/rng.hpp"

namespace fedlora {

namespace {

template <typename T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

// Unit-norm class directions: axes when they fit, otherwise random unit vectors.
std::vector<Vector> class_directions(std::size_t classes, std::size_t d_x, RngStream& rng) {
  std::vector<Vector> dirs;
  if (classes <= d_x) {
    for (std::size_t c = 0; c < classes; ++c) {
      Vector e(d_x);
      e[c] = 1.0;
      dirs.push_back(e);
    }
    return dirs;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    Vector v = sample_gaussian_vector(rng, d_x, 1.0);
    v *= 1.0 / v.norm();
    dirs.push_back(v);
  }
  return dirs;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.classes = classes;
  out.features = Matrix(indices.size(), features.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("Dataset::subset: index out of range");
    auto src = features.row(indices[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> hist(classes, 0);
  for (Label y : labels) ++hist.at(y);
  return hist;
}

SplitDataset generate(std::uint64_t seed, std::size_t n, std::size_t d_x, std::size_t classes,
                      double margin) {
  if (classes < 2) throw std::invalid_argument("generate: need at least 2 classes");
  if (d_x == 0) throw std::invalid_argument("generate: feature dimension must be >= 1");
  if (n < 2 * classes) throw std::invalid_argument("generate: need n >= 2 * classes");
  if (!(margin >= 0.0)) throw std::invalid_argument("generate: margin must be >= 0");

  RngStream root(seed);
  RngStream dir_rng = root.child("class_directions");
  RngStream sample_rng = root.child("samples");
  RngStream order_rng = root.child("order");

  const auto dirs = class_directions(classes, d_x, dir_rng);
  // Axis-aligned means at radius ρ are ρ√2 apart.
  const double radius = classes <= d_x ? margin / std::sqrt(2.0) : margin / 2.0;

  std::vector<std::size_t> train_idx, test_idx;
  Dataset all;
  all.classes = classes;
  all.features = Matrix(n, d_x);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t count = n / classes + (c < n % classes ? 1 : 0);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(count))), 1, count - 1);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      auto x = all.features.row(row);
      for (std::size_t j = 0; j < d_x; ++j) x[j] = radius * dirs[c][j] + sample_rng.normal();
      all.labels.push_back(c);
      (i < n_train ? train_idx : test_idx).push_back(row);
    }
  }
  shuffle(train_idx, order_rng);
  shuffle(test_idx, order_rng);
  return {all.subset(train_idx), all.subset(test_idx)};
}

std::vector<Shard> partition(const Dataset& ds, std::size_t k_devices, double fraction,
                             std::uint64_t seed) {
  if (k_devices == 0) throw std::invalid_argument("partition: need at least one device");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("partition: fraction must lie in (0,1]");
  }
  const auto shard_size =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.size()) + 1e-9));
  if (shard_size == 0) throw std::invalid_argument("partition: shards would be empty");

  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  RngStream root(seed);
  std::vector<Shard> shards;
  for (std::size_t k = 0; k < k_devices; ++k) {
    RngStream rng = root.child("device", k);
    const std::size_t g = ds.classes;
    // Balanced quotas; the remainder rotates across classes by device.
    std::vector<std::size_t> quota(g, shard_size / g);
    for (std::size_t j = 0; j < shard_size % g; ++j) ++quota[(k + j) % g];
    // Move quota that a class cannot supply to classes with spare examples.
    std::size_t deficit = 0;
    for (std::size_t c = 0; c < g; ++c) {
      if (quota[c] > by_class[c].size()) {
        deficit += quota[c] - by_class[c].size();
        quota[c] = by_class[c].size();
      }
    }
    for (std::size_t j = 0; deficit > 0 && j < g; ++j) {
      const std::size_t c = (k + j) % g;
      const std::size_t take = std::min(deficit, by_class[c].size() - quota[c]);
      quota[c] += take;
      deficit -= take;
    }

    Shard shard;
    for (std::size_t c = 0; c < g; ++c) {
      auto pool = by_class[c];
      // Partial Fisher-Yates: the first quota[c] entries form the sample.
      for (std::size_t i = 0; i < quota[c]; ++i)
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      shard.insert(shard.end(), pool.begin(), pool.begin() + static_cast<long>(quota[c]));
    }
    std::sort(shard.begin(), shard.end());
    shards.push_back(std::move(shard));
  }
  return shards;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  for (std::size_t j = 0; j < ds.features.cols(); ++j) out << "feature_" << j << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << ds.labels[i] << '\n';
  }
}

Dataset read_csv(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: missing header");
  const auto d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  for (std::size_t j = 0; j < d; ++j) {
    if (line.find("feature_" + std::to_string(j)) == std::string::npos) {
      throw std::runtime_error("read_csv: malformed header");
    }
  }
  if (!line.ends_with("label")) throw std::runtime_error("read_csv: header must end with label");

  std::vector<double> values;
  Dataset ds;
  ds.classes = classes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t fields = 0;
    while (std::getline(ss, cell, ',')) {
      if (fields < d) {
        values.push_back(std::stod(cell));
      } else {
        const auto label = std::stoull(cell);
        if (label >= classes) {
          throw std::runtime_error("read_csv: label out of range on line " +
                                   std::to_string(line_no));
        }
        ds.labels.push_back(label);
      }
      ++fields;
    }
    if (fields != d + 1) {
      throw std::runtime_error("read_csv: wrong field count on line " + std::to_string(line_no));
    }
  }
  ds.features = Matrix(ds.labels.size(), d, std::move(values));
  return ds;
}

}  // namespace fedlora
