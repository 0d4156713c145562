#include "fedveca/server.hpp"

#include <algorithm>
#include <cmath>

#include "fedveca/error.hpp"
#include "fedveca/log.hpp"

namespace fedveca {

namespace {

constexpr double kDenominatorGuard = 1e-12;
constexpr double kZeroGuard = 1e-15;

}  // namespace

ParamVector global_gradient(std::span<const ClientReport> reports,
                            const ClientWeights& weights) {
  weights.validate();
  if (reports.size() != weights.p.size()) {
    throw ContractError("global_gradient: report count mismatch");
  }
  std::vector<const ClientReport*> ordered(reports.size(), nullptr);
  for (const ClientReport& r : reports) {
    if (r.client_id >= reports.size() || ordered[r.client_id] != nullptr) {
      throw ContractError("global_gradient: missing or duplicate client report");
    }
    if (r.grad_at_start.empty()) {
      throw ContractError("global_gradient: report lacks grad_at_start");
    }
    ordered[r.client_id] = &r;
  }
  ParamVector g(ordered.front()->grad_at_start.size(), 0.0);
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    axpy_inplace(weights.p[i], ordered[i]->grad_at_start, g);
  }
  return g;
}

double estimate_L(EstimatorState& state, std::uint32_t k) {
  if (k < 1) throw ContractError("estimate_L: needs k >= 1");
  double numer = 0.0;
  double denom = 0.0;
  if (k == 1) {
    numer = l2_norm(state.prev_global_grad);
    denom = l2_norm(state.prev_w);
  } else {
    numer = l2_norm(axpy(-1.0, state.prev_prev_global_grad, state.prev_global_grad));
    denom = l2_norm(axpy(-1.0, state.prev_prev_w, state.prev_w));
  }
  if (denom >= kDenominatorGuard) {
    const double estimate = numer / denom;
    state.L_history.push_back(estimate);
    if (estimate > state.L) state.L = estimate;
  }
  return state.L;
}

double compute_A(double beta, double delta, double eta) {
  if (beta < 0.0 || delta < 0.0) throw ContractError("compute_A: beta/delta must be >= 0");
  if (!(eta > 0.0)) throw ContractError("compute_A: eta must be > 0");
  return eta * beta * beta * delta;
}

std::int64_t floor_with_boundary_guard(double x) {
  return static_cast<std::int64_t>(std::floor(x * (1.0 + 1e-12)));
}

TauPrediction predict_tau_detailed(std::span<const double> A, double alpha,
                                   std::uint32_t max_tau) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  if (A.empty()) throw ContractError("predict_tau: empty A");
  double min_a = A[0];
  for (double a : A) {
    if (a < 0.0) throw ContractError("predict_tau: A must be >= 0");
    if (a < min_a) min_a = a;
  }

  TauPrediction out;
  out.tau.resize(A.size());
  out.tau_pre_clamp.resize(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) {
    if (A[i] < kZeroGuard) {
      // A vanishing means the Non-IID effect is invisible for this client;
      // grant the longest allowed schedule.
      out.tau_pre_clamp[i] = static_cast<double>(max_tau);
      out.tau[i] = max_tau;
      continue;
    }
    const double ratio = A[i] / (A[i] - alpha * min_a);
    std::int64_t tau = floor_with_boundary_guard(ratio);
    out.tau_pre_clamp[i] = static_cast<double>(tau);
    if (tau <= 1) tau = 2;
    if (tau > static_cast<std::int64_t>(max_tau)) tau = max_tau;
    out.tau[i] = static_cast<std::uint32_t>(tau);
  }
  return out;
}

std::vector<std::uint32_t> predict_tau(std::span<const double> A, double alpha,
                                       std::uint32_t max_tau) {
  return predict_tau_detailed(A, alpha, max_tau).tau;
}

double premise_value(double eta, double tau_eff, double L) {
  if (!(std::isfinite(eta) && std::isfinite(tau_eff) && std::isfinite(L)) ||
      eta < 0.0 || tau_eff < 0.0 || L < 0.0) {
    throw ContractError("premise_value: inputs must be finite and nonnegative");
  }
  return eta * tau_eff * L;
}

FederatedServer::FederatedServer(ServerConfig config, ClientWeights weights,
                                 ParamVector w0)
    : config_(std::move(config)), weights_(std::move(weights)), w_(std::move(w0)) {
  weights_.validate();
  if (config_.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (!(config_.eta > 0.0)) throw ConfigError("eta must be > 0");
  if (config_.initial_tau.size() != weights_.p.size()) {
    throw ConfigError("initial_tau must list one value per client");
  }
  for (std::uint32_t tau : config_.initial_tau) {
    if (tau < 1) throw ConfigError("initial tau must be >= 1");
  }
  next_tau_ = config_.initial_tau;
}

RoundPlan FederatedServer::initial_plan() const {
  RoundPlan plan;
  plan.round = 0;
  plan.tau_per_client = config_.initial_tau;
  plan.params = w_;
  plan.validate();
  return plan;
}

ServerRoundResult FederatedServer::round(std::span<const ClientReport> reports) {
  const std::uint32_t k = k_;
  ServerRoundResult out;
  out.metrics.tau_used = next_tau_;

  if (reports.size() != weights_.p.size()) {
    throw ContractError("server: report count mismatch");
  }
  for (const ClientReport& r : reports) {
    if (r.client_id >= reports.size()) {
      throw ContractError("server: client id out of range");
    }
    if (r.beta.has_value() != (k >= 1) || r.delta.has_value() != (k >= 1)) {
      throw ContractError("server: beta/delta must be present exactly when k >= 1");
    }
  }

  AggregateResult agg;
  if (config_.algo == Algo::fedavg) {
    // Eq.-4 style: unnormalized gradient sums, reconstructed as tau * G.
    std::vector<const ClientReport*> ordered(reports.size(), nullptr);
    for (const ClientReport& r : reports) ordered[r.client_id] = &r;
    std::vector<ParamVector> sums(reports.size());
    std::vector<std::uint32_t> taus(reports.size());
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      taus[i] = ordered[i]->tau_used;
      sums[i].resize(ordered[i]->normalized_grad.size());
      for (std::size_t j = 0; j < sums[i].size(); ++j) {
        sums[i][j] = static_cast<double>(taus[i]) * ordered[i]->normalized_grad[j];
      }
      agg.tau_eff += weights_.p[i] * static_cast<double>(taus[i]);
    }
    agg.w_next = aggregate_fedavg(sums, taus, weights_, config_.eta, w_);
  } else {
    agg = aggregate_fednova(reports, weights_, config_.eta, w_);
  }
  out.metrics.tau_eff = agg.tau_eff;
  const ParamVector gbar = global_gradient(reports, weights_);

  if (k >= 1) {
    estimate_L(state_, k);
    out.metrics.L = state_.L;
    out.metrics.premise = premise_value(config_.eta, agg.tau_eff, state_.L);
    out.metrics.premise_available = true;
    state_.premise_trace.push_back(out.metrics.premise);
    if (out.metrics.premise < 1.0) {
      logf(LogLevel::info, "round %u: premise eta*tau_k*L = %.6g < 1", k,
           out.metrics.premise);
    }

    if (config_.algo == Algo::fedveca) {
      std::vector<const ClientReport*> ordered(reports.size(), nullptr);
      for (const ClientReport& r : reports) ordered[r.client_id] = &r;
      out.metrics.beta.resize(reports.size());
      out.metrics.delta.resize(reports.size());
      out.metrics.A.resize(reports.size());
      for (std::size_t i = 0; i < ordered.size(); ++i) {
        out.metrics.beta[i] = *ordered[i]->beta;
        out.metrics.delta[i] = *ordered[i]->delta;
        out.metrics.A[i] = compute_A(out.metrics.beta[i], out.metrics.delta[i],
                                     config_.eta);
      }
      state_.A_per_client = out.metrics.A;

      double min_a = *std::min_element(out.metrics.A.begin(), out.metrics.A.end());
      if (!alpha_warned_ && min_a > kZeroGuard && state_.L > 0.0 &&
          config_.alpha >= 2.0 * state_.L / min_a) {
        logf(LogLevel::warn,
             "alpha = %.3g is at or above 2L/min_i A = %.3g; the convergence "
             "bound's small-L regime applies",
             config_.alpha, 2.0 * state_.L / min_a);
        alpha_warned_ = true;
      }

      TauPrediction pred =
          predict_tau_detailed(out.metrics.A, config_.alpha, config_.max_tau);
      out.metrics.tau_next_pre_clamp = std::move(pred.tau_pre_clamp);
      next_tau_ = std::move(pred.tau);
    }
    // Fixed-tau algorithms keep next_tau_ as configured.
  }
  // k == 0 reuses the initial tau for round 1; estimation starts at k == 1.

  // Snapshot this round's model and global gradient for the delayed
  // smoothness estimate.
  state_.prev_prev_w = std::move(state_.prev_w);
  state_.prev_prev_global_grad = std::move(state_.prev_global_grad);
  state_.prev_w = w_;
  state_.prev_global_grad = gbar;

  w_ = agg.w_next;
  out.w_next = agg.w_next;
  k_ = k + 1;

  if (k_ >= config_.rounds) {
    out.stop = true;
  } else {
    RoundPlan plan;
    plan.round = k_;
    plan.tau_per_client = next_tau_;
    plan.params = w_;
    plan.prev_global_grad = gbar;  // grad F(w_k), the stale gradient for round k+1
    plan.validate();
    out.next_plan = std::move(plan);
  }
  return out;
}

}  // namespace fedveca
