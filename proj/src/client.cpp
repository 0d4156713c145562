#include "fedveca/client.hpp"

#include <cmath>
#include <string>

#include "fedveca/error.hpp"

namespace fedveca {

namespace {

constexpr double kDenominatorGuard = 1e-12;

}  // namespace

bool LocalTrajectory::replay_matches(double eta) const {
  if (params.size() != minibatch_grads.size() + 1) return false;
  ParamVector w = params.front();
  for (std::size_t l = 0; l < minibatch_grads.size(); ++l) {
    w = axpy(-eta, minibatch_grads[l], w);
    if (w != params[l + 1]) return false;
  }
  return true;
}

LocalTrainResult local_train(const ParamVector& w0, std::uint32_t tau,
                             const ModelSpec& spec, const Dataset& ds,
                             std::span<const std::uint32_t> shard, double eta,
                             std::uint32_t batch_size, RngStream& rng) {
  if (tau < 1) throw ContractError("local_train: tau must be >= 1");
  if (!(eta > 0.0)) throw ContractError("local_train: eta must be > 0");

  LocalTrainResult out;
  out.trajectory.params.reserve(tau + 1);
  out.trajectory.minibatch_grads.reserve(tau);
  out.trajectory.params.push_back(w0);

  ParamVector grad_sum(w0.size(), 0.0);
  ParamVector w = w0;
  for (std::uint32_t l = 0; l < tau; ++l) {
    const auto batch = sample_minibatch(shard, batch_size, rng);
    ParamVector g = grad(spec, w, ds, batch);
    w = axpy(-eta, g, w);
    if (!all_finite(w)) {
      throw DivergenceError("local_train: parameters diverged at local iteration " +
                                std::to_string(l),
                            l);
    }
    axpy_inplace(1.0, g, grad_sum);
    out.trajectory.minibatch_grads.push_back(std::move(g));
    out.trajectory.params.push_back(w);
  }

  const double inv_tau = 1.0 / static_cast<double>(tau);
  out.normalized_grad.resize(grad_sum.size());
  for (std::size_t j = 0; j < grad_sum.size(); ++j) {
    out.normalized_grad[j] = grad_sum[j] * inv_tau;
  }
  return out;
}

double estimate_beta(std::span<const ParamVector> params,
                     std::span<const ParamVector> grads_at,
                     const ParamVector& grad_at_start) {
  if (params.size() < grads_at.size() + 1) {
    throw ContractError("estimate_beta: parameter/gradient sequence mismatch");
  }
  const ParamVector& w0 = params.front();
  double beta = 0.0;
  for (std::size_t l = 0; l < grads_at.size(); ++l) {
    // lambda = 0 has w^0 = w_k, a 0/0 ratio; the guard skips it.
    const double denom = l2_norm(axpy(-1.0, params[l], w0));
    if (denom < kDenominatorGuard) continue;
    const double numer = l2_norm(axpy(-1.0, grads_at[l], grad_at_start));
    const double ratio = numer / denom;
    if (ratio > beta) beta = ratio;
  }
  return beta;
}

double estimate_beta(const LocalTrajectory& traj, const ParamVector& grad_at_start) {
  return estimate_beta(traj.params, traj.minibatch_grads, grad_at_start);
}

double estimate_delta(const LocalTrajectory& traj, const ParamVector& prev_global_grad,
                      double delta_cap) {
  if (traj.tau() < 2) throw ContractError("estimate_delta: needs tau >= 2");
  const double g_norm = l2_norm(prev_global_grad);
  if (g_norm < kDenominatorGuard) return delta_cap;
  const double g_norm_sq = g_norm * g_norm;

  ParamVector running_sum = traj.minibatch_grads[0];
  double delta = 0.0;
  for (std::uint32_t l = 1; l < traj.tau(); ++l) {
    axpy_inplace(1.0, traj.minibatch_grads[l], running_sum);
    const double numer = dot(running_sum, running_sum);
    const double ratio = numer / (static_cast<double>(l + 1) * g_norm_sq);
    if (ratio > delta) delta = ratio;
  }
  return delta;
}

ClientReport client_round(const ClientRound& round, std::uint32_t client_id,
                          const ModelSpec& spec, const Dataset& ds,
                          std::span<const std::uint32_t> shard, double eta,
                          std::uint32_t batch_size, RngStream rng,
                          const ClientOptions& opts) {
  if (round.round >= 1 && !round.prev_global_grad.has_value()) {
    throw ContractError("client_round: missing previous global gradient");
  }

  ClientReport report;
  report.client_id = client_id;
  report.grad_at_start = full_grad(spec, round.global_params, ds, shard);
  report.loss_at_start = loss(spec, round.global_params, ds, shard);

  LocalTrainResult trained = local_train(round.global_params, round.tau, spec, ds,
                                         shard, eta, batch_size, rng);
  report.tau_used = round.tau;
  report.normalized_grad = std::move(trained.normalized_grad);

  if (round.round >= 1) {
    const LocalTrajectory& traj = trained.trajectory;
    if (opts.beta_full_shard) {
      std::vector<ParamVector> shard_grads;
      shard_grads.reserve(traj.tau());
      for (std::uint32_t l = 0; l < traj.tau(); ++l) {
        shard_grads.push_back(full_grad(spec, traj.params[l], ds, shard));
      }
      report.beta = estimate_beta(traj.params, shard_grads, report.grad_at_start);
    } else {
      report.beta = estimate_beta(traj, report.grad_at_start);
    }
    // A tau = 1 trajectory (possible under fixed-tau baselines) has no
    // accumulation window; report delta = 0.
    report.delta = traj.tau() >= 2
                       ? estimate_delta(traj, *round.prev_global_grad, opts.delta_cap)
                       : 0.0;
  }
  return report;
}

}  // namespace fedveca
