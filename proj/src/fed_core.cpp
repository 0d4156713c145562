#include "fedveca/fed_core.hpp"

#include <algorithm>
#include <cmath>

#include "fedveca/error.hpp"

namespace fedveca {

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::fedveca: return "fedveca";
    case Algo::fedavg: return "fedavg";
    case Algo::fednova: return "fednova";
    case Algo::centralized: return "centralized";
  }
  throw ContractError("algo_name: unknown algorithm");
}

Algo algo_from_name(const std::string& name) {
  if (name == "fedveca") return Algo::fedveca;
  if (name == "fedavg") return Algo::fedavg;
  if (name == "fednova") return Algo::fednova;
  if (name == "centralized") return Algo::centralized;
  throw ConfigError("unknown algorithm '" + name + "'");
}

void RoundPlan::validate() const {
  if (tau_per_client.empty()) throw ContractError("plan: no clients");
  for (std::uint32_t tau : tau_per_client) {
    if (tau < 1) throw ContractError("plan: tau must be >= 1");
  }
  if (prev_global_grad.has_value() != (round >= 1)) {
    throw ContractError("plan: prev_global_grad must be present iff round >= 1");
  }
  if (prev_global_grad && prev_global_grad->size() != params.size()) {
    throw ContractError("plan: prev_global_grad dimension mismatch");
  }
}

void ClientWeights::validate() const {
  if (p.empty()) throw ContractError("weights: empty");
  double sum = 0.0;
  for (double w : p) {
    if (!(w >= 0.0)) throw ContractError("weights: p_i must be >= 0");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    throw ContractError("weights: sum " + std::to_string(sum) + " is not 1");
  }
}

ClientWeights client_weights(std::span<const std::size_t> shard_sizes) {
  if (shard_sizes.empty()) throw ContractError("weights: no shard sizes");
  std::size_t total = 0;
  for (std::size_t s : shard_sizes) {
    if (s == 0) throw ContractError("weights: zero shard size");
    total += s;
  }
  ClientWeights w;
  w.p.resize(shard_sizes.size());
  for (std::size_t i = 0; i < shard_sizes.size(); ++i) {
    w.p[i] = static_cast<double>(shard_sizes[i]) / static_cast<double>(total);
  }
  return w;
}

namespace {

// Reduction order is pinned to client-id order; floating-point sums are not
// order-agnostic even though the math is.
std::vector<const ClientReport*> sorted_by_id(std::span<const ClientReport> reports,
                                              std::size_t expected) {
  if (reports.size() != expected) {
    throw ContractError("aggregate: got " + std::to_string(reports.size()) +
                        " reports, expected " + std::to_string(expected));
  }
  std::vector<const ClientReport*> ordered(reports.size(), nullptr);
  for (const ClientReport& r : reports) {
    if (r.client_id >= reports.size() || ordered[r.client_id] != nullptr) {
      throw ContractError("aggregate: missing or duplicate client report");
    }
    ordered[r.client_id] = &r;
  }
  return ordered;
}

}  // namespace

AggregateResult aggregate_fednova(std::span<const ClientReport> reports,
                                  const ClientWeights& weights, double eta,
                                  const ParamVector& w_k) {
  weights.validate();
  const auto ordered = sorted_by_id(reports, weights.p.size());

  AggregateResult out;
  out.direction.assign(w_k.size(), 0.0);
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const ClientReport& r = *ordered[i];
    if (r.normalized_grad.size() != w_k.size()) {
      throw ContractError("aggregate: report dimension mismatch");
    }
    out.tau_eff += weights.p[i] * static_cast<double>(r.tau_used);
    axpy_inplace(weights.p[i], r.normalized_grad, out.direction);
  }
  out.w_next = axpy(-eta * out.tau_eff, out.direction, w_k);
  check_finite(out.w_next, "aggregate_fednova");
  return out;
}

ParamVector aggregate_fedavg(std::span<const ParamVector> sum_grads,
                             std::span<const std::uint32_t> taus,
                             const ClientWeights& weights, double eta,
                             const ParamVector& w_k) {
  weights.validate();
  if (sum_grads.size() != weights.p.size() || taus.size() != weights.p.size()) {
    throw ContractError("aggregate_fedavg: input count mismatch");
  }
  for (std::uint32_t tau : taus) {
    if (tau != taus[0]) {
      throw ContractError("aggregate_fedavg: tau must be uniform across clients");
    }
  }
  ParamVector weighted_sum(w_k.size(), 0.0);
  for (std::size_t i = 0; i < sum_grads.size(); ++i) {
    if (sum_grads[i].size() != w_k.size()) {
      throw ContractError("aggregate_fedavg: dimension mismatch");
    }
    axpy_inplace(weights.p[i], sum_grads[i], weighted_sum);
  }
  ParamVector w_next = axpy(-eta, weighted_sum, w_k);
  check_finite(w_next, "aggregate_fedavg");
  return w_next;
}

}  // namespace fedveca
