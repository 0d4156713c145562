#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedveca/rng.hpp"

namespace fedveca {

// Labeled samples in flat row-major storage.
struct Dataset {
  std::vector<double> features;  // size() * feature_dim, row-major
  std::vector<std::int32_t> labels;
  std::uint32_t feature_dim = 0;
  std::int32_t num_classes = 0;

  std::size_t size() const { return labels.size(); }

  std::span<const double> sample_features(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }

  std::int32_t label(std::size_t i) const { return labels[i]; }

  // Throws ContractError if empty, storage sizes disagree, or a label is
  // outside [0, num_classes).
  void validate() const;
};

// Class-conditional Gaussian blobs: class c is centered at
// separation * u_c with unit variance, where u_c = +/- e_{c mod d}
// (sign flips on each wrap). Labels are assigned round robin, so class
// counts are balanced within one sample. Deterministic per seed.
Dataset gen_synthetic(std::size_t n, std::uint32_t d, std::int32_t classes,
                      double separation, std::uint64_t seed);

// IDX-format reader (big-endian magic 0x00000803 for images, 0x00000801
// for labels). Pixels are scaled to [0, 1]; images are flattened row major.
Dataset read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Relabels a 10-class digit dataset to {odd = 0, even = 1}.
Dataset binarize_even_odd(const Dataset& ds);

enum class PartitionCase { case1, case2, case3 };

struct PartitionPlan {
  PartitionCase scheme = PartitionCase::case1;
  std::vector<std::vector<std::uint32_t>> shards;  // index lists, one per client

  // Asserts shards are pairwise disjoint, nonempty, and cover each assigned
  // index exactly once.
  void validate(std::size_t dataset_size) const;
};

// case1: each sample goes to a uniformly random client.
// case2: contiguous label groups, one group per client (requires
//        n_clients <= num_classes).
// case3: the first ceil(n/2) clients share the first ceil(C/2) labels as in
//        case1; the remaining clients split the remaining labels as in case2.
PartitionPlan partition(const Dataset& ds, PartitionCase scheme,
                        std::uint32_t n_clients, std::uint64_t seed);

// B indices drawn uniformly with replacement; a fresh draw per element.
std::vector<std::uint32_t> sample_minibatch(std::span<const std::uint32_t> shard,
                                            std::uint32_t batch_size, RngStream& rng);

}  // namespace fedveca
