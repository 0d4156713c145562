#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedveca/dataset.hpp"
#include "fedveca/error.hpp"
#include "fedveca/model.hpp"
#include "fedveca/vector_ops.hpp"

using namespace fedveca;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

// 3 images of 2x2 pixels plus matching labels.
std::pair<std::filesystem::path, std::filesystem::path> write_idx_fixture() {
  std::vector<std::uint8_t> images;
  push_u32(images, 0x00000803);
  push_u32(images, 3);
  push_u32(images, 2);
  push_u32(images, 2);
  for (std::uint8_t p : {51, 0, 255, 128, 10, 20, 30, 40, 5, 6, 7, 8}) images.push_back(p);

  std::vector<std::uint8_t> labels;
  push_u32(labels, 0x00000801);
  push_u32(labels, 3);
  for (std::uint8_t y : {4, 0, 9}) labels.push_back(y);

  const auto img_path = temp_file("fedveca_idx_images");
  const auto lab_path = temp_file("fedveca_idx_labels");
  write_bytes(img_path, images);
  write_bytes(lab_path, labels);
  return {img_path, lab_path};
}

}  // namespace

TEST_CASE("gen_synthetic is deterministic and balanced") {
  const Dataset a = gen_synthetic(100, 2, 2, 4.0, 7);
  const Dataset b = gen_synthetic(100, 2, 2, 4.0, 7);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  std::size_t count[2] = {0, 0};
  for (std::int32_t y : a.labels) count[y]++;
  CHECK(count[0] == 50);
  CHECK(count[1] == 50);

  const Dataset c = gen_synthetic(101, 2, 2, 4.0, 7);
  std::size_t count_odd[2] = {0, 0};
  for (std::int32_t y : c.labels) count_odd[y]++;
  CHECK(std::llabs(static_cast<long long>(count_odd[0]) -
                   static_cast<long long>(count_odd[1])) <= 1);

  CHECK_THROWS_AS(gen_synthetic(1, 2, 2, 4.0, 7), ContractError);
  CHECK_THROWS_AS(gen_synthetic(10, 2, 2, 0.0, 7), ContractError);
}

TEST_CASE("well-separated blobs are learnable to 99% train accuracy") {
  const Dataset ds = gen_synthetic(400, 2, 2, 8.0, 21);
  const ModelSpec spec{ModelKind::squared_svm, 2, 2, 0.0};
  std::vector<std::uint32_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);

  RngStream rng(3);
  ParamVector w(spec.param_dim(), 0.0);
  for (int it = 0; it < 500; ++it) {
    const auto batch = sample_minibatch(all, 32, rng);
    w = axpy(-0.01, grad(spec, w, ds, batch), w);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.sample_features(i);
    double score = w[2];
    for (int j = 0; j < 2; ++j) score += w[j] * x[j];
    correct += ((score >= 0.0 ? 1 : 0) == ds.label(i));
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(ds.size()) >= 0.99);
}

TEST_CASE("idx fixture reads back bit-exactly") {
  const auto [img_path, lab_path] = write_idx_fixture();
  const Dataset ds = read_idx(img_path, lab_path);
  CHECK(ds.size() == 3);
  CHECK(ds.feature_dim == 4);
  CHECK(ds.num_classes == 10);
  // Pixel (0,0) of image 0 is byte 16 of the file.
  CHECK(ds.sample_features(0)[0] == 51.0 / 255.0);
  CHECK(ds.sample_features(0)[2] == 1.0);
  CHECK(ds.label(0) == 4);
  CHECK(ds.label(2) == 9);
}

TEST_CASE("idx reader error variants are distinct") {
  const auto [img_path, lab_path] = write_idx_fixture();

  // Wrong image magic.
  std::vector<std::uint8_t> bad_magic;
  push_u32(bad_magic, 0x00000804);
  push_u32(bad_magic, 0);
  push_u32(bad_magic, 2);
  push_u32(bad_magic, 2);
  const auto bad_magic_path = temp_file("fedveca_idx_bad_magic");
  write_bytes(bad_magic_path, bad_magic);
  CHECK_THROWS_AS(read_idx(bad_magic_path, lab_path), IdxMagicError);

  // Truncated image payload.
  std::vector<std::uint8_t> truncated;
  push_u32(truncated, 0x00000803);
  push_u32(truncated, 3);
  push_u32(truncated, 2);
  push_u32(truncated, 2);
  truncated.push_back(1);
  const auto truncated_path = temp_file("fedveca_idx_truncated");
  write_bytes(truncated_path, truncated);
  CHECK_THROWS_AS(read_idx(truncated_path, lab_path), IdxTruncatedError);

  // Image/label count mismatch.
  std::vector<std::uint8_t> two_labels;
  push_u32(two_labels, 0x00000801);
  push_u32(two_labels, 2);
  two_labels.push_back(1);
  two_labels.push_back(2);
  const auto two_labels_path = temp_file("fedveca_idx_two_labels");
  write_bytes(two_labels_path, two_labels);
  CHECK_THROWS_AS(read_idx(img_path, two_labels_path), IdxCountError);
}

TEST_CASE("binarize_even_odd maps digit parity") {
  Dataset ds = gen_synthetic(40, 3, 10, 2.0, 11);
  const Dataset bin = binarize_even_odd(ds);
  CHECK(bin.num_classes == 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(bin.label(i) == (ds.label(i) % 2 == 0 ? 1 : 0));
  }
}

TEST_CASE("partition invariants hold for every case and client count") {
  const Dataset ds = gen_synthetic(600, 4, 10, 3.0, 77);
  for (PartitionCase scheme :
       {PartitionCase::case1, PartitionCase::case2, PartitionCase::case3}) {
    for (std::uint32_t n : {2u, 5u, 10u}) {
      const PartitionPlan plan = partition(ds, scheme, n, 1234);
      plan.validate(ds.size());  // disjoint, nonempty, within range
      std::size_t assigned = 0;
      for (const auto& shard : plan.shards) assigned += shard.size();
      CHECK(assigned == ds.size());
    }
  }
}

TEST_CASE("case1 histograms stay within 3 sigma of the multinomial expectation") {
  const std::int32_t classes = 5;
  const Dataset ds = gen_synthetic(2000, 3, classes, 3.0, 31);
  const std::uint32_t n_clients = 4;
  const PartitionPlan plan = partition(ds, PartitionCase::case1, n_clients, 99);

  std::vector<std::size_t> class_total(classes, 0);
  for (std::int32_t y : ds.labels) class_total[y]++;

  for (const auto& shard : plan.shards) {
    std::vector<std::size_t> histogram(classes, 0);
    for (std::uint32_t idx : shard) histogram[ds.label(idx)]++;
    for (std::int32_t c = 0; c < classes; ++c) {
      // Counts for class c in one shard are Binomial(n_c, 1/n_clients).
      const double p = 1.0 / n_clients;
      const double expectation = static_cast<double>(class_total[c]) * p;
      const double sigma =
          std::sqrt(static_cast<double>(class_total[c]) * p * (1.0 - p));
      CHECK(std::fabs(static_cast<double>(histogram[c]) - expectation) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("case2 gives contiguous pure label groups") {
  const Dataset ds = gen_synthetic(300, 2, 2, 3.0, 5);
  const PartitionPlan plan = partition(ds, PartitionCase::case2, 2, 1);
  for (std::uint32_t idx : plan.shards[0]) CHECK(ds.label(idx) == 0);
  for (std::uint32_t idx : plan.shards[1]) CHECK(ds.label(idx) == 1);

  // Label-group sizes are ceil(C/n) or floor(C/n).
  const Dataset ds10 = gen_synthetic(500, 2, 10, 3.0, 6);
  for (std::uint32_t n : {3u, 4u, 7u}) {
    const PartitionPlan p10 = partition(ds10, PartitionCase::case2, n, 2);
    for (const auto& shard : p10.shards) {
      std::set<std::int32_t> labels;
      for (std::uint32_t idx : shard) labels.insert(ds10.label(idx));
      const std::size_t lo = 10 / n;
      const std::size_t hi = (10 + n - 1) / n;
      CHECK(labels.size() >= lo);
      CHECK(labels.size() <= hi);
    }
  }

  CHECK_THROWS_AS(partition(ds, PartitionCase::case2, 3, 1), ContractError);
}

TEST_CASE("case3 splits labels between an IID half and single-label-group clients") {
  const Dataset ds = gen_synthetic(1000, 2, 10, 3.0, 8);
  const PartitionPlan plan = partition(ds, PartitionCase::case3, 5, 4);

  // Clients 0-2 hold only labels 0-4, mixed.
  for (std::size_t c = 0; c < 3; ++c) {
    std::set<std::int32_t> labels;
    for (std::uint32_t idx : plan.shards[c]) labels.insert(ds.label(idx));
    for (std::int32_t y : labels) CHECK(y < 5);
    CHECK(labels.size() > 1);
  }
  // Clients 3 and 4 hold disjoint subsets of labels 5-9.
  std::set<std::int32_t> labels3, labels4;
  for (std::uint32_t idx : plan.shards[3]) labels3.insert(ds.label(idx));
  for (std::uint32_t idx : plan.shards[4]) labels4.insert(ds.label(idx));
  for (std::int32_t y : labels3) {
    CHECK(y >= 5);
    CHECK(labels4.count(y) == 0);
  }
  for (std::int32_t y : labels4) CHECK(y >= 5);
}

TEST_CASE("partitioning is deterministic per seed") {
  const Dataset ds = gen_synthetic(500, 2, 10, 3.0, 42);
  const PartitionPlan a = partition(ds, PartitionCase::case3, 5, 77);
  const PartitionPlan b = partition(ds, PartitionCase::case3, 5, 77);
  CHECK(a.shards == b.shards);
  const PartitionPlan c = partition(ds, PartitionCase::case3, 5, 78);
  CHECK(a.shards != c.shards);
}

TEST_CASE("sample_minibatch basics") {
  RngStream rng(10);
  const std::vector<std::uint32_t> single{42};
  CHECK(sample_minibatch(single, 1, rng) == std::vector<std::uint32_t>{42});

  RngStream r1(5), r2(5);
  const std::vector<std::uint32_t> shard{1, 2, 3, 4};
  CHECK(sample_minibatch(shard, 16, r1) == sample_minibatch(shard, 16, r2));

  // Draws are with replacement, so batches larger than the shard work.
  RngStream r3(6);
  CHECK(sample_minibatch(shard, 100, r3).size() == 100);
}

TEST_CASE("sample_minibatch frequencies follow the binomial bound") {
  RngStream rng(8);
  const std::vector<std::uint32_t> shard{0, 1, 2, 3};
  std::size_t counts[4] = {};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    for (std::uint32_t idx : sample_minibatch(shard, 1, rng)) counts[idx]++;
  }
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::fabs(static_cast<double>(counts[c]) - 2500.0) <= 3.0 * sigma);
  }
}
