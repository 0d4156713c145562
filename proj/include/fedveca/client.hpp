#pragma once

#include <cstdint>
#include <span>

#include "fedveca/dataset.hpp"
#include "fedveca/fed_core.hpp"
#include "fedveca/model.hpp"
#include "fedveca/rng.hpp"

namespace fedveca {

// One round of local SGD, fully recorded.
struct LocalTrajectory {
  std::vector<ParamVector> params;           // w^0 .. w^tau
  std::vector<ParamVector> minibatch_grads;  // g_0 .. g_{tau-1}

  std::uint32_t tau() const { return static_cast<std::uint32_t>(minibatch_grads.size()); }

  // Recomputes the parameter sequence from the stored gradients with the
  // same step operation and asserts bitwise equality.
  bool replay_matches(double eta) const;
};

struct LocalTrainResult {
  LocalTrajectory trajectory;
  ParamVector normalized_grad;  // G = (1/tau) * sum of minibatch gradients
};

// Runs tau minibatch-SGD steps w^{l+1} = w^l - eta * g_l from w0. Throws
// DivergenceError naming the iteration if parameters leave the finite range.
LocalTrainResult local_train(const ParamVector& w0, std::uint32_t tau,
                             const ModelSpec& spec, const Dataset& ds,
                             std::span<const std::uint32_t> shard, double eta,
                             std::uint32_t batch_size, RngStream& rng);

// Local smoothness estimate: max over lambda of
// ||grad_at_start - g_lambda|| / ||w^0 - w^lambda||, skipping ratios whose
// denominator is below 1e-12 (notably lambda = 0). Returns 0 if every ratio
// is skipped. `grads_at` supplies the per-step gradients to compare against
// (the stored minibatch gradients by default).
double estimate_beta(std::span<const ParamVector> params,
                     std::span<const ParamVector> grads_at,
                     const ParamVector& grad_at_start);
double estimate_beta(const LocalTrajectory& traj, const ParamVector& grad_at_start);

// Gradient-accumulation ratio: max over lambda in [1, tau-1] of
// ||sum_{s=0..lambda} g_s||^2 / ((lambda+1) * ||prev_global_grad||^2).
// Returns delta_cap when the stale global gradient has vanished.
double estimate_delta(const LocalTrajectory& traj, const ParamVector& prev_global_grad,
                      double delta_cap);

struct ClientOptions {
  // Re-evaluate the full-shard gradient at every visited point for the beta
  // estimate instead of reusing the stored minibatch gradients.
  bool beta_full_shard = false;
  double delta_cap = 500.0;  // 10 * max_tau by default
};

// Full round at one client: full-shard loss and gradient at w_k, local
// training, and (for round >= 1) the beta/delta estimates against the
// received stale global gradient.
ClientReport client_round(const ClientRound& round, std::uint32_t client_id,
                          const ModelSpec& spec, const Dataset& ds,
                          std::span<const std::uint32_t> shard, double eta,
                          std::uint32_t batch_size, RngStream rng,
                          const ClientOptions& opts);

}  // namespace fedveca
