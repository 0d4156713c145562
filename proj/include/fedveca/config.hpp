#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedveca/dataset.hpp"
#include "fedveca/fed_core.hpp"
#include "fedveca/model.hpp"

namespace fedveca {

enum class TransportKind { inproc, socket };

struct DatasetConfig {
  enum class Source { synthetic, idx };
  enum class Binarize { none, even_odd };

  Source source = Source::synthetic;
  // synthetic blobs
  std::size_t n = 2000;
  std::uint32_t feature_dim = 20;
  std::int32_t classes = 2;
  double separation = 4.0;
  std::size_t test_n = 500;
  // idx files
  std::string images, labels, test_images, test_labels;
  Binarize binarize = Binarize::none;
};

struct ExperimentConfig {
  Algo algo = Algo::fedveca;

  ModelKind model_kind = ModelKind::squared_svm;
  double l2_reg = 0.0;

  DatasetConfig dataset;

  PartitionCase partition_case = PartitionCase::case1;
  std::uint32_t n_clients = 5;

  double eta = 0.01;
  double alpha = 0.95;
  std::uint32_t batch_size = 32;
  std::uint32_t rounds = 100;     // K
  std::uint32_t tau_initial = 5;  // tau_{(0,i)} for every client
  std::uint32_t max_tau = 50;
  bool beta_full_shard = false;

  // Baseline inputs when running them standalone (compare derives both).
  std::optional<std::vector<std::uint32_t>> fixed_tau;
  std::optional<std::uint64_t> tau_all;

  std::vector<std::uint64_t> seeds = {1};
  std::string out_path = "metrics.csv";
  bool json_output = false;
  TransportKind transport = TransportKind::inproc;
  std::uint16_t socket_port = 0;  // 0 picks an ephemeral port

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Parses a TOML document; unset fields keep the defaults above.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

// Emits a TOML document that parse_config_text maps back to an equal config.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace fedveca
