#include "fedveca/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>

#include "fedveca/error.hpp"

namespace fedveca {

void Dataset::validate() const {
  if (labels.empty()) throw ContractError("dataset: empty");
  if (feature_dim == 0) throw ContractError("dataset: feature_dim is zero");
  if (features.size() != labels.size() * static_cast<std::size_t>(feature_dim)) {
    throw ContractError("dataset: feature storage does not match sample count");
  }
  for (std::int32_t y : labels) {
    if (y < 0 || y >= num_classes) {
      throw ContractError("dataset: label " + std::to_string(y) +
                          " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset gen_synthetic(std::size_t n, std::uint32_t d, std::int32_t classes,
                      double separation, std::uint64_t seed) {
  if (classes < 1 || n < static_cast<std::size_t>(classes) || d < 1) {
    throw ContractError("gen_synthetic: need n >= classes >= 1 and d >= 1");
  }
  if (!(separation > 0.0)) throw ContractError("gen_synthetic: separation must be > 0");

  Dataset ds;
  ds.feature_dim = d;
  ds.num_classes = classes;
  ds.labels.resize(n);
  ds.features.resize(n * static_cast<std::size_t>(d));

  RngStream rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t c = static_cast<std::int32_t>(i % static_cast<std::size_t>(classes));
    ds.labels[i] = c;
    double* row = ds.features.data() + i * d;
    for (std::uint32_t j = 0; j < d; ++j) row[j] = rng.next_gaussian();
    const std::uint32_t axis = static_cast<std::uint32_t>(c) % d;
    const double sign = ((static_cast<std::uint32_t>(c) / d) % 2 == 0) ? 1.0 : -1.0;
    row[axis] += sign * separation;
  }
  return ds;
}

namespace {

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw IdxTruncatedError("idx: truncated header in " + path);
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

Dataset read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("idx: cannot open " + images_path.string());
  const std::uint32_t img_magic = read_u32_be(img, images_path.string());
  if (img_magic != 0x00000803u) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "idx: bad image magic 0x%08x", img_magic);
    throw IdxMagicError(std::string(buf) + " in " + images_path.string());
  }
  const std::uint32_t n_images = read_u32_be(img, images_path.string());
  const std::uint32_t rows = read_u32_be(img, images_path.string());
  const std::uint32_t cols = read_u32_be(img, images_path.string());

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("idx: cannot open " + labels_path.string());
  const std::uint32_t lab_magic = read_u32_be(lab, labels_path.string());
  if (lab_magic != 0x00000801u) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "idx: bad label magic 0x%08x", lab_magic);
    throw IdxMagicError(std::string(buf) + " in " + labels_path.string());
  }
  const std::uint32_t n_labels = read_u32_be(lab, labels_path.string());
  if (n_images != n_labels) {
    throw IdxCountError("idx: " + std::to_string(n_images) + " images vs " +
                        std::to_string(n_labels) + " labels");
  }

  const std::size_t pixels_per_image = static_cast<std::size_t>(rows) * cols;
  Dataset ds;
  ds.feature_dim = static_cast<std::uint32_t>(pixels_per_image);
  ds.num_classes = 10;
  ds.labels.resize(n_images);
  ds.features.resize(static_cast<std::size_t>(n_images) * pixels_per_image);

  std::vector<unsigned char> buf(pixels_per_image);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(pixels_per_image));
    if (img.gcount() != static_cast<std::streamsize>(pixels_per_image)) {
      throw IdxTruncatedError("idx: truncated image data in " + images_path.string());
    }
    double* row = ds.features.data() + static_cast<std::size_t>(i) * pixels_per_image;
    for (std::size_t p = 0; p < pixels_per_image; ++p) {
      row[p] = static_cast<double>(buf[p]) / 255.0;
    }
  }
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    unsigned char y;
    lab.read(reinterpret_cast<char*>(&y), 1);
    if (lab.gcount() != 1) {
      throw IdxTruncatedError("idx: truncated label data in " + labels_path.string());
    }
    ds.labels[i] = static_cast<std::int32_t>(y);
  }
  ds.validate();
  return ds;
}

Dataset binarize_even_odd(const Dataset& ds) {
  Dataset out = ds;
  out.num_classes = 2;
  for (auto& y : out.labels) y = (y % 2 == 0) ? 1 : 0;
  return out;
}

void PartitionPlan::validate(std::size_t dataset_size) const {
  std::vector<std::uint8_t> seen(dataset_size, 0);
  for (std::size_t c = 0; c < shards.size(); ++c) {
    if (shards[c].empty()) {
      throw ContractError("partition: shard " + std::to_string(c) + " is empty");
    }
    for (std::uint32_t idx : shards[c]) {
      if (idx >= dataset_size) throw ContractError("partition: index out of range");
      if (seen[idx]) throw ContractError("partition: index assigned twice");
      seen[idx] = 1;
    }
  }
}

namespace {

// Balanced contiguous label groups: group g covers labels in
// [g*C/n, (g+1)*C/n), sizes differ by at most one.
std::uint32_t label_group(std::int32_t label, std::int32_t num_labels,
                          std::uint32_t n_groups) {
  for (std::uint32_t g = 0; g < n_groups; ++g) {
    const std::int32_t lo = static_cast<std::int32_t>(
        (static_cast<std::uint64_t>(g) * num_labels) / n_groups);
    const std::int32_t hi = static_cast<std::int32_t>(
        (static_cast<std::uint64_t>(g + 1) * num_labels) / n_groups);
    if (label >= lo && label < hi) return g;
  }
  throw ContractError("partition: label outside group range");
}

// Uniform random assignment never leaves a shard empty at experiment scale,
// but the invariant must hold for tiny inputs too: move one sample from the
// largest shard (lowest index wins ties) into each empty one.
void fill_empty_shards(std::vector<std::vector<std::uint32_t>>& shards) {
  for (std::size_t c = 0; c < shards.size(); ++c) {
    if (!shards[c].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t d = 1; d < shards.size(); ++d) {
      if (shards[d].size() > shards[donor].size()) donor = d;
    }
    if (shards[donor].size() < 2) {
      throw ContractError("partition: not enough samples to cover every client");
    }
    shards[c].push_back(shards[donor].back());
    shards[donor].pop_back();
  }
}

}  // namespace

PartitionPlan partition(const Dataset& ds, PartitionCase scheme,
                        std::uint32_t n_clients, std::uint64_t seed) {
  if (n_clients < 2) throw ContractError("partition: need at least 2 clients");
  ds.validate();

  PartitionPlan plan;
  plan.scheme = scheme;
  plan.shards.assign(n_clients, {});
  RngStream rng(seed);
  const std::size_t n = ds.size();

  switch (scheme) {
    case PartitionCase::case1: {
      for (std::size_t i = 0; i < n; ++i) {
        plan.shards[rng.next_below(n_clients)].push_back(static_cast<std::uint32_t>(i));
      }
      fill_empty_shards(plan.shards);
      break;
    }
    case PartitionCase::case2: {
      if (n_clients > static_cast<std::uint32_t>(ds.num_classes)) {
        throw ContractError("partition: case2 needs n_clients <= num_classes");
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t g = label_group(ds.label(i), ds.num_classes, n_clients);
        plan.shards[g].push_back(static_cast<std::uint32_t>(i));
      }
      break;
    }
    case PartitionCase::case3: {
      const std::uint32_t n_iid = (n_clients + 1) / 2;
      const std::uint32_t n_rest = n_clients - n_iid;
      const std::int32_t first_labels = (ds.num_classes + 1) / 2;
      const std::int32_t rest_labels = ds.num_classes - first_labels;
      if (n_rest == 0 || rest_labels < static_cast<std::int32_t>(n_rest)) {
        throw ContractError("partition: case3 needs enough labels for the non-IID half");
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t y = ds.label(i);
        if (y < first_labels) {
          plan.shards[rng.next_below(n_iid)].push_back(static_cast<std::uint32_t>(i));
        } else {
          const std::uint32_t g = label_group(y - first_labels, rest_labels, n_rest);
          plan.shards[n_iid + g].push_back(static_cast<std::uint32_t>(i));
        }
      }
      fill_empty_shards(plan.shards);
      break;
    }
  }
  plan.validate(n);
  return plan;
}

std::vector<std::uint32_t> sample_minibatch(std::span<const std::uint32_t> shard,
                                            std::uint32_t batch_size, RngStream& rng) {
  if (shard.empty()) throw ContractError("sample_minibatch: empty shard");
  if (batch_size < 1) throw ContractError("sample_minibatch: batch size must be >= 1");
  std::vector<std::uint32_t> batch(batch_size);
  for (std::uint32_t b = 0; b < batch_size; ++b) {
    batch[b] = shard[rng.next_below(shard.size())];
  }
  return batch;
}

}  // namespace fedveca
