#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "euler_resnet/tensor_core.hpp"

namespace euler_resnet {

struct Dataset {
  Matrix features;                  // n x d
  std::vector<int> labels;          // n
  std::vector<std::uint64_t> ids;   // stable sample identity, n
  int num_classes = 2;

  std::size_t size() const { return labels.size(); }
  Eigen::Index dim() const { return features.cols(); }
  /// Rows at the given positions, in that order.
  Dataset subset(const std::vector<std::size_t>& rows) const;
  bool operator==(const Dataset&) const = default;
};

struct MoonSpec {
  int n_per_class = 500;
  double radius = 1.0;
  double noise_std = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const MoonSpec&) const = default;
};

/// Two interleaving half circles. Class 0 is (r cos t, r sin t), class 1 is
/// (r - r cos t, r/2 - r sin t), t ~ U[0, pi]; N(0, noise_std^2) is then
/// added to every coordinate. Rows are class 0 then class 1; ids are 0..n-1.
Dataset generate_two_moons(const MoonSpec& spec);

/// Adds N(0, std^2) to every feature. The noise for a sample depends only on
/// (seed, sample id): it is drawn from Rng(derive_seed(seed, id)). Noise
/// therefore commutes with reordering and splitting.
Dataset add_gaussian_noise(const Dataset& d, double std, std::uint64_t seed);

/// Shuffled disjoint partition; the first round(n * train_fraction) rows of
/// the permutation Rng(seed).permutation(n) form the first part.
std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction,
                                  std::uint64_t seed);

/// Header x0..x{d-1},label; floats at 17 significant digits.
void write_dataset_csv(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path, int num_classes = 2);

}  // namespace euler_resnet
