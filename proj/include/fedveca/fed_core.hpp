#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedveca/vector_ops.hpp"

namespace fedveca {

enum class Algo { fedveca, fedavg, fednova, centralized };

std::string algo_name(Algo algo);
Algo algo_from_name(const std::string& name);

// Server -> clients instruction for round k.
struct RoundPlan {
  std::uint32_t round = 0;
  std::vector<std::uint32_t> tau_per_client;  // local SGD iteration counts
  ParamVector params;                         // w_k
  std::optional<ParamVector> prev_global_grad;  // grad F(w_{k-1}); absent at k == 0

  void validate() const;
};

// What one client sees in round k.
struct ClientRound {
  std::uint32_t round = 0;
  std::uint32_t tau = 1;
  ParamVector global_params;
  std::optional<ParamVector> prev_global_grad;
};

// Client -> server payload for one round.
struct ClientReport {
  std::uint32_t client_id = 0;
  std::uint32_t tau_used = 0;
  double loss_at_start = 0.0;              // F_i(w_k) on the full shard
  std::optional<double> beta;              // absent exactly when round == 0
  std::optional<double> delta;             // absent exactly when round == 0
  ParamVector normalized_grad;             // G: mean of the tau minibatch gradients
  ParamVector grad_at_start;               // full-shard gradient at w_k

  friend bool operator==(const ClientReport&, const ClientReport&) = default;
};

// Aggregation weights p_i = D_i / D.
struct ClientWeights {
  std::vector<double> p;

  void validate() const;  // p_i >= 0, sum within 1e-12 of 1
};

ClientWeights client_weights(std::span<const std::size_t> shard_sizes);

struct AggregateResult {
  ParamVector w_next;
  double tau_eff = 0.0;   // weighted average step count
  ParamVector direction;  // d_k, the weighted average of client directions
};

// Normalized averaging: tau_eff = sum_i p_i tau_i, d = sum_i p_i G_i, and
// w_next = w_k - eta * tau_eff * d. Reports are reduced in client-id order
// regardless of arrival order.
AggregateResult aggregate_fednova(std::span<const ClientReport> reports,
                                  const ClientWeights& weights, double eta,
                                  const ParamVector& w_k);

// Unnormalized-sum averaging, valid only when every client ran the same
// number of local steps: w_next = w_k - eta * sum_i p_i * sum_grad_i.
ParamVector aggregate_fedavg(std::span<const ParamVector> sum_grads,
                             std::span<const std::uint32_t> taus,
                             const ClientWeights& weights, double eta,
                             const ParamVector& w_k);

}  // namespace fedveca
