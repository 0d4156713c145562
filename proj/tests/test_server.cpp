#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedveca/error.hpp"
#include "fedveca/rng.hpp"
#include "fedveca/server.hpp"

using namespace fedveca;

namespace {

ClientReport make_report(std::uint32_t id, std::uint32_t tau, ParamVector g,
                         ParamVector grad_at_start,
                         std::optional<double> beta = std::nullopt,
                         std::optional<double> delta = std::nullopt) {
  ClientReport r;
  r.client_id = id;
  r.tau_used = tau;
  r.normalized_grad = std::move(g);
  r.grad_at_start = std::move(grad_at_start);
  r.beta = beta;
  r.delta = delta;
  return r;
}

}  // namespace

TEST_CASE("global_gradient examples") {
  const ClientWeights p{{0.5, 0.5}};
  const std::vector<ClientReport> reports{
      make_report(0, 2, {0, 0}, {2.0, 0.0}),
      make_report(1, 2, {0, 0}, {0.0, 2.0}),
  };
  CHECK(global_gradient(reports, p) == ParamVector{1.0, 1.0});

  const ParamVector g{0.3, -0.7};
  const std::vector<ClientReport> same{
      make_report(0, 2, {0, 0}, g),
      make_report(1, 2, {0, 0}, g),
  };
  const ParamVector combined = global_gradient(same, p);
  CHECK(combined[0] == doctest::Approx(g[0]).epsilon(1e-15));
  CHECK(combined[1] == doctest::Approx(g[1]).epsilon(1e-15));

  const ClientWeights uneven{{0.25, 0.75}};
  const std::vector<ClientReport> skewed{
      make_report(0, 2, {0, 0}, {4.0, 0.0}),
      make_report(1, 2, {0, 0}, {0.0, 4.0}),
  };
  CHECK(global_gradient(skewed, uneven) == ParamVector{1.0, 3.0});
}

TEST_CASE("estimate_L follows the delayed ratio rule") {
  EstimatorState state;
  state.prev_w = {0.0, 4.0};          // ||w_0|| = 4
  state.prev_global_grad = {2.0, 0.0};  // ||grad F(w_0)|| = 2
  CHECK(estimate_L(state, 1) == 0.5);
  CHECK(state.L_history.size() == 1);

  // Equal consecutive gradients contribute 0; running max is unchanged.
  state.prev_prev_w = {0.0, 4.0};
  state.prev_w = {0.0, 2.0};
  state.prev_prev_global_grad = {2.0, 0.0};
  state.prev_global_grad = {2.0, 0.0};
  CHECK(estimate_L(state, 2) == 0.5);
  CHECK(state.L_history.back() == 0.0);

  // Vanishing parameter change skips the update.
  state.prev_prev_w = state.prev_w;
  state.prev_global_grad = {3.0, 0.0};
  CHECK(estimate_L(state, 3) == 0.5);
  CHECK(state.L_history.size() == 2);

  CHECK_THROWS_AS(estimate_L(state, 0), ContractError);
}

TEST_CASE("estimate_L on a quadratic objective is exactly 1") {
  // grad F(w) = w, so every ratio ||dg|| / ||dw|| is 1.
  EstimatorState state;
  RngStream rng(6);
  ParamVector w(4);
  for (auto& x : w) x = rng.next_gaussian();
  state.prev_w = w;
  state.prev_global_grad = w;
  CHECK(estimate_L(state, 1) == 1.0);
  for (std::uint32_t k = 2; k < 6; ++k) {
    ParamVector w_next = axpy(-0.05, w, w);
    state.prev_prev_w = state.prev_w;
    state.prev_prev_global_grad = state.prev_global_grad;
    state.prev_w = w_next;
    state.prev_global_grad = w_next;
    CHECK(estimate_L(state, k) == doctest::Approx(1.0).epsilon(1e-12));
    w = std::move(w_next);
  }
  CHECK(state.L == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("compute_A") {
  CHECK(compute_A(0.0, 3.0, 0.01) == 0.0);
  CHECK(compute_A(2.0, 3.0, 0.01) == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(compute_A(2.0, 0.0, 0.01) == 0.0);
  CHECK_THROWS_AS(compute_A(-1.0, 1.0, 0.01), ContractError);
  CHECK_THROWS_AS(compute_A(1.0, 1.0, 0.0), ContractError);
}

TEST_CASE("predict_tau derived cases") {
  const std::vector<double> a{2.0, 4.0};
  CHECK(predict_tau(a, 0.95, 50) == std::vector<std::uint32_t>{20, 2});

  // All-equal A: every client gets floor(1/(1-alpha)).
  const std::vector<double> equal{0.7, 0.7, 0.7};
  CHECK(predict_tau(equal, 0.95, 50) == std::vector<std::uint32_t>{20, 20, 20});

  // Zero-guard: a vanishing A receives max_tau.
  const std::vector<double> with_zero{2.0, 4.0, 1e-20};
  CHECK(predict_tau(with_zero, 0.95, 10) == std::vector<std::uint32_t>{2, 2, 10});

  // Cap branch.
  CHECK(predict_tau(a, 0.95, 10) == std::vector<std::uint32_t>{10, 2});

  CHECK_THROWS_AS(predict_tau(a, 1.5, 50), ConfigError);
  CHECK_THROWS_AS(predict_tau(std::vector<double>{-1.0}, 0.5, 50), ContractError);
}

TEST_CASE("predict_tau properties on random inputs") {
  RngStream rng(314);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.next_below(6);
    std::vector<double> A(n);
    for (auto& a : A) a = 1e-6 + rng.next_double() * 10.0;
    const double alpha = 0.05 + 0.9 * rng.next_double();
    const std::uint32_t max_tau = 50;
    const TauPrediction pred = predict_tau_detailed(A, alpha, max_tau);

    std::size_t argmin = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (A[i] < A[argmin]) argmin = i;
    }
    double max_pre = -1.0;
    for (double t : pred.tau_pre_clamp) max_pre = std::max(max_pre, t);
    // Eq. 14 decreases in A_i, so the argmin client gets the largest raw tau.
    CHECK(pred.tau_pre_clamp[argmin] == max_pre);

    for (std::size_t i = 0; i < n; ++i) {
      CHECK(pred.tau[i] >= 2);
      CHECK(pred.tau[i] <= max_tau);
      // Pre-clamp floor result never exceeds the real-valued bound.
      const double bound = A[i] / (A[i] - alpha * A[argmin]);
      CHECK(pred.tau_pre_clamp[i] <= bound * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("premise_value") {
  CHECK(premise_value(0.01, 50.0, 2.0) == 1.0);
  CHECK(premise_value(0.01, 3.0, 0.5) == doctest::Approx(0.015).epsilon(1e-15));
  CHECK(premise_value(0.01, 3.0, 0.0) == 0.0);
  CHECK_THROWS_AS(premise_value(-0.01, 1.0, 1.0), ContractError);
}

namespace {

ServerConfig fedveca_config(std::uint32_t rounds, std::size_t n_clients) {
  ServerConfig config;
  config.algo = Algo::fedveca;
  config.eta = 0.01;
  config.alpha = 0.95;
  config.max_tau = 50;
  config.rounds = rounds;
  config.initial_tau.assign(n_clients, 5);
  return config;
}

}  // namespace

TEST_CASE("round 0 reuses the initial tau for round 1") {
  const ClientWeights p{{0.5, 0.5}};
  FederatedServer server(fedveca_config(3, 2), p, ParamVector{0.0, 0.0});
  const RoundPlan plan0 = server.initial_plan();
  CHECK(plan0.tau_per_client == std::vector<std::uint32_t>{5, 5});

  const std::vector<ClientReport> reports{
      make_report(0, 5, {0.1, 0.0}, {0.2, 0.0}),
      make_report(1, 5, {0.0, 0.1}, {0.0, 0.2}),
  };
  const ServerRoundResult out = server.round(reports);
  CHECK_FALSE(out.stop);
  REQUIRE(out.next_plan.has_value());
  CHECK(out.next_plan->round == 1);
  CHECK(out.next_plan->tau_per_client == std::vector<std::uint32_t>{5, 5});
  // The stale gradient broadcast with round 1 is grad F(w_0).
  REQUIRE(out.next_plan->prev_global_grad.has_value());
  CHECK(*out.next_plan->prev_global_grad == ParamVector{0.1, 0.1});
}

TEST_CASE("K=1 stops after a single round") {
  const ClientWeights p{{1.0}};
  FederatedServer server(fedveca_config(1, 1), p, ParamVector{0.0});
  const std::vector<ClientReport> reports{make_report(0, 5, {1.0}, {1.0})};
  const ServerRoundResult out = server.round(reports);
  CHECK(out.stop);
  CHECK_FALSE(out.next_plan.has_value());
  CHECK(out.w_next.size() == 1);
}

TEST_CASE("beta/delta presence must match the round index") {
  const ClientWeights p{{1.0}};
  FederatedServer server(fedveca_config(3, 1), p, ParamVector{0.0});
  // beta present at k = 0: rejected.
  const std::vector<ClientReport> early{make_report(0, 5, {1.0}, {1.0}, 0.5, 0.5)};
  CHECK_THROWS_AS(server.round(early), ContractError);
}

TEST_CASE("three scripted rounds match a straight-line reference computation") {
  // Two clients, dimension 1, hand-fed reports; every quantity recomputed
  // here with plain arithmetic.
  const double eta = 0.01;
  const double alpha = 0.95;
  const ClientWeights p{{0.5, 0.5}};
  ServerConfig config = fedveca_config(4, 2);
  config.eta = eta;
  config.alpha = alpha;
  FederatedServer server(config, p, ParamVector{1.0});

  // Round 0: taus are the initial 5.
  const double g00 = 0.6, g01 = 0.4;   // normalized directions G
  const double f00 = 0.9, f01 = 1.1;   // full-shard gradients at w_0
  const std::vector<ClientReport> r0{
      make_report(0, 5, {g00}, {f00}),
      make_report(1, 5, {g01}, {f01}),
  };
  const ServerRoundResult out0 = server.round(r0);
  const double tau_eff0 = 0.5 * 5 + 0.5 * 5;
  const double d0 = 0.5 * g00 + 0.5 * g01;
  const double w1 = 1.0 - eta * tau_eff0 * d0;
  CHECK(out0.w_next[0] == doctest::Approx(w1).epsilon(1e-15));
  const double gbar0 = 0.5 * f00 + 0.5 * f01;

  // Round 1: same taus (reused); beta/delta now present.
  const double g10 = 0.5, g11 = 0.3;
  const double f10 = 0.7, f11 = 0.9;
  const double beta10 = 2.0, delta10 = 1.5;
  const double beta11 = 1.0, delta11 = 1.0;
  const std::vector<ClientReport> r1{
      make_report(0, 5, {g10}, {f10}, beta10, delta10),
      make_report(1, 5, {g11}, {f11}, beta11, delta11),
  };
  const ServerRoundResult out1 = server.round(r1);
  const double d1 = 0.5 * g10 + 0.5 * g11;
  const double w2 = w1 - eta * 5.0 * d1;
  CHECK(out1.w_next[0] == doctest::Approx(w2).epsilon(1e-14));

  // L_0 = ||grad F(w_0)|| / ||w_0||, estimated at k = 1 from the snapshots.
  const double L1 = gbar0 / 1.0;
  CHECK(out1.metrics.L == doctest::Approx(L1).epsilon(1e-14));
  CHECK(out1.metrics.premise == doctest::Approx(eta * 5.0 * L1).epsilon(1e-14));

  // A and the predicted taus for round 2.
  const double A0 = eta * beta10 * beta10 * delta10;  // 0.06
  const double A1 = eta * beta11 * beta11 * delta11;  // 0.01
  CHECK(out1.metrics.A[0] == doctest::Approx(A0).epsilon(1e-15));
  CHECK(out1.metrics.A[1] == doctest::Approx(A1).epsilon(1e-15));
  const double bound0 = A0 / (A0 - alpha * A1);
  REQUIRE(out1.next_plan.has_value());
  CHECK(out1.metrics.tau_next_pre_clamp[0] == std::floor(bound0));  // 1.18... -> 1
  CHECK(out1.next_plan->tau_per_client[0] == 2);                    // reset branch
  CHECK(out1.next_plan->tau_per_client[1] == 20);  // argmin: 1/(1-alpha) -> 20

  // Round 2 with the predicted taus; L picks up the difference ratio.
  const double g20 = 0.2, g21 = 0.1;
  const double f20 = 0.5, f21 = 0.7;
  const std::vector<ClientReport> r2{
      make_report(0, 2, {g20}, {f20}, 1.0, 1.0),
      make_report(1, 20, {g21}, {f21}, 1.0, 1.0),
  };
  const ServerRoundResult out2 = server.round(r2);
  const double tau_eff2 = 0.5 * 2 + 0.5 * 20;
  const double d2 = 0.5 * g20 + 0.5 * g21;
  const double w3 = w2 - eta * tau_eff2 * d2;
  CHECK(out2.w_next[0] == doctest::Approx(w3).epsilon(1e-14));

  const double gbar1 = 0.5 * f10 + 0.5 * f11;
  const double L2_candidate = std::fabs(gbar1 - gbar0) / std::fabs(w1 - 1.0);
  const double L2 = std::max(L1, L2_candidate);
  CHECK(out2.metrics.L == doctest::Approx(L2).epsilon(1e-12));
}

TEST_CASE("L is non-decreasing across a simulated run") {
  const ClientWeights p{{0.5, 0.5}};
  FederatedServer server(fedveca_config(20, 2), p, ParamVector{1.0, -1.0});
  RngStream rng(50);
  RoundPlan plan = server.initial_plan();
  double last_L = 0.0;
  for (;;) {
    const std::uint32_t k = plan.round;
    std::vector<ClientReport> reports;
    for (std::uint32_t i = 0; i < 2; ++i) {
      ParamVector g{0.3 * rng.next_gaussian(), 0.3 * rng.next_gaussian()};
      ParamVector f{0.3 * rng.next_gaussian(), 0.3 * rng.next_gaussian()};
      std::optional<double> beta, delta;
      if (k >= 1) {
        beta = std::fabs(rng.next_gaussian());
        delta = std::fabs(rng.next_gaussian());
      }
      reports.push_back(
          make_report(i, plan.tau_per_client[i], std::move(g), std::move(f), beta, delta));
    }
    const ServerRoundResult out = server.round(reports);
    CHECK(out.metrics.L >= last_L);
    last_L = out.metrics.L;
    if (out.stop) break;
    plan = *out.next_plan;
  }
}
