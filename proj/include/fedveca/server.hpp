#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedveca/fed_core.hpp"

namespace fedveca {

// Server-side estimation history. The global-gradient and parameter
// snapshots lag one round behind on purpose: the smoothness estimate for
// round k uses quantities from rounds k-1 and k-2.
struct EstimatorState {
  std::vector<double> L_history;   // per-round L_{k-1} estimates
  double L = 0.0;                  // running max of the history
  ParamVector prev_w;              // w_{k-1}
  ParamVector prev_prev_w;         // w_{k-2}
  ParamVector prev_global_grad;    // grad F(w_{k-1})
  ParamVector prev_prev_global_grad;  // grad F(w_{k-2})
  std::vector<double> A_per_client;   // latest round's A_{(k,i)}
  std::vector<double> premise_trace;  // eta * tau_k * L per round (k >= 1)
};

// Weighted average of the clients' exact local gradients at w_k.
ParamVector global_gradient(std::span<const ClientReport> reports,
                            const ClientWeights& weights);

// Smoothness estimate with a one-round delay:
//   k == 1: L_0 = ||grad F(w_0)|| / ||w_0||
//   k >= 2: L_{k-1} = ||grad F(w_{k-1}) - grad F(w_{k-2})|| / ||w_{k-1} - w_{k-2}||
// Ratios with denominator below 1e-12 are skipped. Appends to the history
// and returns the running max.
double estimate_L(EstimatorState& state, std::uint32_t k);

// Heterogeneity score A = eta * beta^2 * delta.
double compute_A(double beta, double delta, double eta);

// floor(x) evaluated as if x carried no accumulated rounding error: values
// within 1e-12 relative of the next integer are treated as that integer.
// The tau predictor's ratio is exactly 1/(1 - alpha) for the argmin client,
// and with a decimal alpha like 0.95 that is an exact integer which binary
// arithmetic lands a few ulps below.
std::int64_t floor_with_boundary_guard(double x);

struct TauPrediction {
  std::vector<std::uint32_t> tau;       // clamped to [2, max_tau]
  std::vector<double> tau_pre_clamp;    // floor result before reset/cap
};

// Per-client step counts for the next round:
//   tau_i = floor(A_i / (A_i - alpha * min_j A_j)), then tau_i <= 1 -> 2,
//   then tau_i = min(tau_i, max_tau). Clients whose A_i is below the
//   zero-guard (1e-15) receive max_tau.
TauPrediction predict_tau_detailed(std::span<const double> A, double alpha,
                                   std::uint32_t max_tau);
std::vector<std::uint32_t> predict_tau(std::span<const double> A, double alpha,
                                       std::uint32_t max_tau);

// eta * tau_k * L; the caller logs it and flags rounds where it is below 1.
double premise_value(double eta, double tau_eff, double L);

struct ServerConfig {
  Algo algo = Algo::fedveca;
  double eta = 0.01;
  double alpha = 0.95;
  std::uint32_t max_tau = 50;
  std::uint32_t rounds = 100;                 // K
  std::vector<std::uint32_t> initial_tau;     // tau_{(0,i)}
};

struct RoundMetrics {
  double tau_eff = 0.0;
  double L = 0.0;
  double premise = 0.0;                 // eta * tau_eff * L, 0 while unavailable
  bool premise_available = false;
  std::vector<std::uint32_t> tau_used;  // per client, this round
  std::vector<double> beta, delta, A;   // per client; empty at round 0
  std::vector<double> tau_next_pre_clamp;  // predictor output before reset/cap
};

struct ServerRoundResult {
  ParamVector w_next;
  std::optional<RoundPlan> next_plan;  // empty when the STOP flag is set
  bool stop = false;
  RoundMetrics metrics;
};

// Round-synchronous coordinator. Drives aggregation for one algorithm and,
// under FedVeca, the estimator pipeline and tau control.
class FederatedServer {
 public:
  FederatedServer(ServerConfig config, ClientWeights weights, ParamVector w0);

  RoundPlan initial_plan() const;

  // Consumes the complete set of round-k reports, advances to round k+1.
  ServerRoundResult round(std::span<const ClientReport> reports);

  std::uint32_t current_round() const { return k_; }
  const ParamVector& current_params() const { return w_; }
  const EstimatorState& estimator_state() const { return state_; }

 private:
  ServerConfig config_;
  ClientWeights weights_;
  ParamVector w_;
  std::uint32_t k_ = 0;
  std::vector<std::uint32_t> next_tau_;
  EstimatorState state_;
  bool alpha_warned_ = false;
};

}  // namespace fedveca
