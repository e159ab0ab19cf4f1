#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "corefed/matrix.hpp"

namespace corefed {

using ClientId = int;

// Labeled samples; one row of `inputs` per label. Inputs live in [0,1].
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return inputs.cols(); }
  bool empty() const { return labels.empty(); }

  /// Rows selected by `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  void validate() const;
};

// One client's private data. `test_degenerate` marks an empty test slice,
// which happens only when every class held by the client has a single sample.
struct Shard {
  ClientId client_id = 0;
  Dataset train;
  Dataset test;
  bool test_degenerate = false;
};

struct PartitionPlan {
  double alpha = 0.0;
  int num_clients = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // client index per sample
  int attempts = 0;             // draws needed to satisfy the non-empty rule

  std::vector<std::size_t> samples_of(int client) const;
};

inline constexpr int kPartitionRetryBudget = 100;

/// Gaussian class blobs (sigma 0.3 around uniformly drawn means), clipped to
/// [0,1]. Labels cycle through the classes so counts differ by at most one.
Dataset gen_synthetic(int num_classes, int input_dim, int n, std::uint64_t seed);

/// Parse an IDX3 image file and an IDX1 label file (big-endian headers).
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Per-class Dirichlet(alpha) allocation of samples to `m` clients.
PartitionPlan dirichlet_partition(const Dataset& dataset, int m, double alpha,
                                  std::uint64_t seed);

/// Stratified per-client train/test split of a partition.
std::vector<Shard> split_test(const Dataset& dataset, const PartitionPlan& plan,
                              double test_fraction);

/// Largest-remainder rounding of `proportions * total`; the result sums to total.
std::vector<std::size_t> largest_remainder(std::span<const double> proportions,
                                           std::size_t total);

}  // namespace corefed
