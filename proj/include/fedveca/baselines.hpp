#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedveca/config.hpp"
#include "fedveca/dataset.hpp"
#include "fedveca/metrics.hpp"
#include "fedveca/server.hpp"

namespace fedveca {

// Per-round, per-client step counts actually used by a FedVeca run; the
// iteration budget that fair baselines must match.
struct BudgetLedger {
  std::vector<std::vector<std::uint32_t>> tau_log;

  std::uint64_t tau_all() const;
};

// Fixed per-client step counts matching the ledger's budget:
// E_avg = (tau_all / K) * (B / D), tau_i = floor(E_avg * D_i / B), at least 1.
std::vector<std::uint32_t> budget_tau(const BudgetLedger& ledger, std::uint32_t rounds,
                                      std::uint32_t batch_size, std::size_t total_size,
                                      std::span<const std::size_t> shard_sizes);

// One step count for every client, for the same budget. FedAvg's aggregation
// rule requires a uniform tau, so its baseline collapses the per-client
// formula to tau = floor(E_avg * (D/N) / B).
std::uint32_t budget_tau_uniform(const BudgetLedger& ledger, std::uint32_t rounds,
                                 std::uint32_t batch_size, std::size_t total_size,
                                 std::uint32_t n_clients);

// Plain SGD on the pooled dataset for tau_all iterations, checkpointing
// loss/accuracy roughly `checkpoints` times plus once at the end.
struct CentralizedResult {
  std::vector<RoundRecord> records;
  ParamVector final_params;
};
CentralizedResult run_centralized(std::uint64_t tau_all, std::uint32_t batch_size,
                                  const ModelSpec& spec, const Dataset& train,
                                  const Dataset& test, double eta, std::uint64_t seed,
                                  std::uint32_t checkpoints, std::uint32_t n_clients);
CentralizedResult run_centralized(std::uint64_t tau_all, std::uint32_t batch_size,
                                  const ModelSpec& spec, const Dataset& train,
                                  const Dataset& test, double eta, std::uint64_t seed,
                                  std::uint32_t checkpoints, std::uint32_t n_clients,
                                  ParamVector w0);

// Everything one federated run produces. The per-round server metrics keep
// the estimator internals (pre-clamp tau, A, L) visible to tests.
struct ExperimentResult {
  std::vector<RoundRecord> records;
  BudgetLedger ledger;
  ParamVector final_params;
  std::vector<RoundMetrics> server_metrics;
};

// Runs one federated experiment (fedveca, fedavg or fednova) for one seed on
// prepared data. Baselines take their fixed tau from `fixed_tau`.
ExperimentResult run_federated(Algo algo, const ExperimentConfig& config,
                               std::uint64_t seed, const Dataset& train,
                               const Dataset& test, const PartitionPlan& plan,
                               std::optional<std::vector<std::uint32_t>> fixed_tau);

// Builds the seed-derived dataset and partition, then dispatches on the
// algorithm. Baselines require config.fixed_tau (or tau_all for centralized).
ExperimentResult run_experiment(Algo algo, const ExperimentConfig& config,
                                std::uint64_t seed);

// Loads (or generates) the train/test pair described by the config, with the
// raw labels. Partitioning uses these; apply_binarize produces the
// model-facing labels afterwards, so label-skew cases keep their skew in the
// underlying classes (the parity-of-digits setup).
std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& config,
                                          std::uint64_t seed);
Dataset apply_binarize(const ExperimentConfig& config, const Dataset& ds);

ModelSpec model_spec_for(const ExperimentConfig& config, const Dataset& train);

// Seed-derived N(0, 0.01^2) start parameters, shared by every run of one
// seed so the federated algorithms and the centralized reference compare
// from the same model. A zero start would degenerate the round-1 smoothness
// estimate ||grad F(w_0)|| / ||w_0||.
ParamVector initial_params(const ModelSpec& spec, std::uint64_t seed);

// The fair-comparison protocol: FedVeca first, then budget-matched FedNova,
// FedAvg, and centralized SGD, per seed; appends cross-seed mean rows.
std::vector<RoundRecord> run_compare(const ExperimentConfig& config);

// Multi-seed `run` for a single algorithm; appends mean rows when more than
// one seed is given.
std::vector<RoundRecord> run_multi_seed(const ExperimentConfig& config);

}  // namespace fedveca
