#include "fedveca/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "fedveca/client.hpp"
#include "fedveca/error.hpp"
#include "fedveca/log.hpp"
#include "fedveca/transport.hpp"

namespace fedveca {

std::uint64_t BudgetLedger::tau_all() const {
  std::uint64_t total = 0;
  for (const auto& round : tau_log) {
    for (std::uint32_t tau : round) total += tau;
  }
  return total;
}

namespace {

double average_epoch(const BudgetLedger& ledger, std::uint32_t rounds,
                     std::uint32_t batch_size, std::size_t total_size) {
  if (rounds < 1 || batch_size < 1 || total_size < 1) {
    throw ContractError("budget_tau: inputs must be positive");
  }
  return (static_cast<double>(ledger.tau_all()) / static_cast<double>(rounds)) *
         (static_cast<double>(batch_size) / static_cast<double>(total_size));
}

}  // namespace

std::vector<std::uint32_t> budget_tau(const BudgetLedger& ledger, std::uint32_t rounds,
                                      std::uint32_t batch_size, std::size_t total_size,
                                      std::span<const std::size_t> shard_sizes) {
  const double e_avg = average_epoch(ledger, rounds, batch_size, total_size);
  std::vector<std::uint32_t> taus(shard_sizes.size());
  for (std::size_t i = 0; i < shard_sizes.size(); ++i) {
    if (shard_sizes[i] < 1) throw ContractError("budget_tau: zero shard size");
    const double raw = std::floor(e_avg * static_cast<double>(shard_sizes[i]) /
                                  static_cast<double>(batch_size));
    taus[i] = raw < 1.0 ? 1u : static_cast<std::uint32_t>(raw);
  }
  return taus;
}

std::uint32_t budget_tau_uniform(const BudgetLedger& ledger, std::uint32_t rounds,
                                 std::uint32_t batch_size, std::size_t total_size,
                                 std::uint32_t n_clients) {
  if (n_clients < 1) throw ContractError("budget_tau: need at least one client");
  const double e_avg = average_epoch(ledger, rounds, batch_size, total_size);
  const double mean_shard =
      static_cast<double>(total_size) / static_cast<double>(n_clients);
  const double raw = std::floor(e_avg * mean_shard / static_cast<double>(batch_size));
  return raw < 1.0 ? 1u : static_cast<std::uint32_t>(raw);
}

CentralizedResult run_centralized(std::uint64_t tau_all, std::uint32_t batch_size,
                                  const ModelSpec& spec, const Dataset& train,
                                  const Dataset& test, double eta, std::uint64_t seed,
                                  std::uint32_t checkpoints, std::uint32_t n_clients) {
  spec.validate();
  train.validate();
  std::vector<std::uint32_t> all(train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);

  RngStream rng(derive_seed(seed, kPurposeCentralized, 0));
  ParamVector w(spec.param_dim(), 0.0);

  CentralizedResult out;
  const std::string seed_label = std::to_string(seed);
  const std::vector<double> zeros(n_clients, 0.0);
  const auto record = [&](std::uint32_t checkpoint_index) {
    const auto [test_loss, accuracy] = evaluate(spec, w, test);
    RoundRecord row;
    row.round = checkpoint_index;
    row.algo = algo_name(Algo::centralized);
    row.seed = seed_label;
    row.loss = test_loss;
    row.accuracy = accuracy;
    row.tau = zeros;
    row.beta = zeros;
    row.delta = zeros;
    row.A = zeros;
    out.records.push_back(std::move(row));
  };

  if (tau_all == 0) {
    record(0);
    out.final_params = w;
    return out;
  }

  const std::uint64_t stride =
      std::max<std::uint64_t>(1, tau_all / std::max<std::uint32_t>(checkpoints, 1));
  std::uint32_t checkpoint = 0;
  for (std::uint64_t it = 1; it <= tau_all; ++it) {
    const auto batch = sample_minibatch(all, batch_size, rng);
    const ParamVector g = grad(spec, w, train, batch);
    w = axpy(-eta, g, w);
    if (!all_finite(w)) {
      throw DivergenceError("centralized: diverged at iteration " + std::to_string(it),
                            static_cast<std::size_t>(it));
    }
    if (it % stride == 0 || it == tau_all) record(checkpoint++);
  }
  out.final_params = std::move(w);
  return out;
}

namespace {

struct ClientContext {
  std::uint32_t id = 0;
  ModelSpec spec;
  const Dataset* data = nullptr;
  std::span<const std::uint32_t> shard;
  double eta = 0.0;
  std::uint32_t batch_size = 0;
  RngStream train_root{0};
  ClientOptions opts;
};

// Client side of the round protocol, shared by both transports: RoundStart
// (then PrevGlobalGrad when k >= 1) in, ClientReport out, until Stop.
void run_client_loop(MessageChannel& channel, const ClientContext& ctx) {
  try {
    for (;;) {
      Message m = channel.recv(std::nullopt);
      if (std::holds_alternative<StopMsg>(m)) return;
      auto* rs = std::get_if<RoundStartMsg>(&m);
      if (rs == nullptr) {
        throw TransportError("client: expected RoundStart");
      }
      ClientRound round;
      round.round = rs->round;
      round.tau = rs->tau;
      round.global_params = std::move(rs->params);
      if (round.round >= 1) {
        Message m2 = channel.recv(std::nullopt);
        auto* pg = std::get_if<PrevGlobalGradMsg>(&m2);
        if (pg == nullptr) {
          throw TransportError("client: expected PrevGlobalGrad");
        }
        round.prev_global_grad = std::move(pg->grad);
      }
      RngStream rng = ctx.train_root.substream(round.round, ctx.id);
      ClientReport report = client_round(round, ctx.id, ctx.spec, *ctx.data, ctx.shard,
                                         ctx.eta, ctx.batch_size, rng, ctx.opts);
      channel.send(ClientReportMsg{std::move(report)});
    }
  } catch (const std::exception& e) {
    // The server's collect step will time out and abort the round.
    logf(LogLevel::error, "client %u terminated: %s", ctx.id, e.what());
  }
}

}  // namespace

ModelSpec model_spec_for(const ExperimentConfig& config, const Dataset& train) {
  ModelSpec spec;
  spec.kind = config.model_kind;
  spec.feature_dim = train.feature_dim;
  spec.num_classes =
      config.model_kind == ModelKind::squared_svm ? 2 : train.num_classes;
  spec.l2_reg = config.l2_reg;
  spec.validate();
  if (spec.kind == ModelKind::squared_svm && train.num_classes != 2) {
    throw ConfigError("squared_svm needs a binary dataset (use binarize = \"even_odd\")");
  }
  return spec;
}

std::pair<Dataset, Dataset> load_datasets(const ExperimentConfig& config,
                                          std::uint64_t seed) {
  // Raw labels; partitioning happens on these. The even/odd relabeling for
  // binary models is applied afterwards so that label-skew partitions keep
  // their skew in the underlying classes, as with parity tasks on digits.
  if (config.dataset.source == DatasetConfig::Source::synthetic) {
    Dataset train = gen_synthetic(config.dataset.n, config.dataset.feature_dim,
                                  config.dataset.classes, config.dataset.separation,
                                  derive_seed(seed, kPurposeData, 0));
    Dataset test = gen_synthetic(config.dataset.test_n, config.dataset.feature_dim,
                                 config.dataset.classes, config.dataset.separation,
                                 derive_seed(seed, kPurposeData, 1));
    return {std::move(train), std::move(test)};
  }
  Dataset train = read_idx(config.dataset.images, config.dataset.labels);
  Dataset test = read_idx(config.dataset.test_images, config.dataset.test_labels);
  return {std::move(train), std::move(test)};
}

Dataset apply_binarize(const ExperimentConfig& config, const Dataset& ds) {
  if (config.dataset.binarize == DatasetConfig::Binarize::even_odd) {
    return binarize_even_odd(ds);
  }
  return ds;
}

ExperimentResult run_federated(Algo algo, const ExperimentConfig& config,
                               std::uint64_t seed, const Dataset& train,
                               const Dataset& test, const PartitionPlan& plan,
                               std::optional<std::vector<std::uint32_t>> fixed_tau) {
  if (algo == Algo::centralized) {
    throw ContractError("run_federated: centralized SGD is not a federated run");
  }
  const ModelSpec spec = model_spec_for(config, train);
  const std::uint32_t n_clients = config.n_clients;
  if (plan.shards.size() != n_clients) {
    throw ContractError("run_federated: partition does not match n_clients");
  }

  std::vector<std::size_t> shard_sizes(n_clients);
  for (std::uint32_t i = 0; i < n_clients; ++i) shard_sizes[i] = plan.shards[i].size();
  const ClientWeights weights = client_weights(shard_sizes);

  ServerConfig server_config;
  server_config.algo = algo;
  server_config.eta = config.eta;
  server_config.alpha = config.alpha;
  server_config.max_tau = config.max_tau;
  server_config.rounds = config.rounds;
  if (algo == Algo::fedveca) {
    server_config.initial_tau.assign(n_clients, config.tau_initial);
  } else {
    if (!fixed_tau) {
      throw ConfigError("fixed-tau baselines need a tau vector (run compare, or set "
                        "training.fixed_tau)");
    }
    server_config.initial_tau = *fixed_tau;
  }

  FederatedServer server(server_config, weights, ParamVector(spec.param_dim(), 0.0));

  const ClientOptions opts{config.beta_full_shard, 10.0 * config.max_tau};
  const RngStream train_root(derive_seed(seed, kPurposeTraining, 0));
  std::vector<ClientContext> contexts(n_clients);
  for (std::uint32_t i = 0; i < n_clients; ++i) {
    contexts[i] = ClientContext{i,          spec,
                                &train,     std::span(plan.shards[i]),
                                config.eta, config.batch_size,
                                train_root, opts};
  }

  // Transport setup. Both flavors expose one channel per client, indexed by
  // client id, plus a worker thread per client.
  std::vector<InProcConduit> conduits;
  std::vector<std::unique_ptr<MessageChannel>> tcp_channels;
  std::vector<MessageChannel*> channels(n_clients, nullptr);
  std::vector<std::thread> workers;
  std::optional<std::chrono::milliseconds> timeout;

  if (config.transport == TransportKind::inproc) {
    conduits = std::vector<InProcConduit>(n_clients);
    for (std::uint32_t i = 0; i < n_clients; ++i) {
      channels[i] = &conduits[i].server_end();
      workers.emplace_back(
          [&conduits, &contexts, i] { run_client_loop(conduits[i].client_end(), contexts[i]); });
    }
  } else {
    TcpListener listener(config.socket_port);
    const std::uint16_t port = listener.port();
    for (std::uint32_t i = 0; i < n_clients; ++i) {
      workers.emplace_back([port, &contexts, i] {
        try {
          auto channel = tcp_connect_client(port, i);
          run_client_loop(*channel, contexts[i]);
        } catch (const std::exception& e) {
          logf(LogLevel::error, "client %u connection failed: %s", i, e.what());
        }
      });
    }
    tcp_channels.resize(n_clients);
    for (std::uint32_t i = 0; i < n_clients; ++i) {
      auto [id, channel] = listener.accept_client(std::chrono::milliseconds(60000));
      if (id >= n_clients || tcp_channels[id] != nullptr) {
        throw TransportError("socket transport: bad client id preamble");
      }
      tcp_channels[id] = std::move(channel);
    }
    for (std::uint32_t i = 0; i < n_clients; ++i) channels[i] = tcp_channels[i].get();
    timeout = std::chrono::milliseconds(60000);
  }

  ExperimentResult out;
  const std::string seed_label = std::to_string(seed);
  try {
    RoundPlan plan_k = server.initial_plan();
    for (;;) {
      const auto reports = broadcast_and_collect(channels, plan_k, timeout);
      ServerRoundResult result = server.round(reports);

      const auto [test_loss, accuracy] = evaluate(spec, result.w_next, test);
      RoundRecord row;
      row.round = plan_k.round;
      row.algo = algo_name(algo);
      row.seed = seed_label;
      row.loss = test_loss;
      row.accuracy = accuracy;
      row.tau_eff = result.metrics.tau_eff;
      row.eta_tau_L = result.metrics.premise;
      row.tau.assign(result.metrics.tau_used.begin(), result.metrics.tau_used.end());
      const std::vector<double> zeros(n_clients, 0.0);
      row.beta = result.metrics.beta.empty() ? zeros : result.metrics.beta;
      row.delta = result.metrics.delta.empty() ? zeros : result.metrics.delta;
      row.A = result.metrics.A.empty() ? zeros : result.metrics.A;
      out.records.push_back(std::move(row));

      out.ledger.tau_log.push_back(result.metrics.tau_used);
      out.server_metrics.push_back(std::move(result.metrics));

      if (result.stop) break;
      plan_k = std::move(*result.next_plan);
    }
  } catch (...) {
    for (MessageChannel* c : channels) {
      if (c == nullptr) continue;
      try {
        c->send(StopMsg{});
      } catch (...) {
      }
    }
    for (auto& t : workers) t.join();
    throw;
  }

  broadcast_stop(channels);
  for (auto& t : workers) t.join();
  out.final_params = server.current_params();
  return out;
}

ExperimentResult run_experiment(Algo algo, const ExperimentConfig& config,
                                std::uint64_t seed) {
  auto [train_raw, test_raw] = load_datasets(config, seed);
  const Dataset train = apply_binarize(config, train_raw);
  const Dataset test = apply_binarize(config, test_raw);
  if (algo == Algo::centralized) {
    if (!config.tau_all) {
      throw ConfigError("centralized runs need training.tau_all (or use compare)");
    }
    const ModelSpec spec = model_spec_for(config, train);
    CentralizedResult central =
        run_centralized(*config.tau_all, config.batch_size, spec, train, test,
                        config.eta, seed, config.rounds, config.n_clients);
    ExperimentResult out;
    out.records = std::move(central.records);
    out.final_params = std::move(central.final_params);
    return out;
  }

  const PartitionPlan plan = partition(train_raw, config.partition_case, config.n_clients,
                                       derive_seed(seed, kPurposePartition, 0));
  std::optional<std::vector<std::uint32_t>> fixed_tau = config.fixed_tau;
  if (algo == Algo::fedavg && fixed_tau) {
    for (std::uint32_t t : *fixed_tau) {
      if (t != fixed_tau->front()) {
        throw ConfigError("fedavg requires a uniform fixed_tau");
      }
    }
  }
  return run_federated(algo, config, seed, train, test, plan, std::move(fixed_tau));
}

std::vector<RoundRecord> run_multi_seed(const ExperimentConfig& config) {
  std::vector<RoundRecord> records;
  for (std::uint64_t seed : config.seeds) {
    ExperimentResult result = run_experiment(config.algo, config, seed);
    records.insert(records.end(), result.records.begin(), result.records.end());
  }
  if (config.seeds.size() > 1) {
    const auto means = mean_rows(records);
    records.insert(records.end(), means.begin(), means.end());
  }
  return records;
}

std::vector<RoundRecord> run_compare(const ExperimentConfig& config) {
  struct SeedOutputs {
    std::vector<RoundRecord> fedveca, fedavg, fednova, centralized;
  };
  std::vector<SeedOutputs> per_seed;

  for (std::uint64_t seed : config.seeds) {
    auto [train_raw, test_raw] = load_datasets(config, seed);
    const Dataset train = apply_binarize(config, train_raw);
    const Dataset test = apply_binarize(config, test_raw);
    const ModelSpec spec = model_spec_for(config, train);
    const PartitionPlan plan = partition(train_raw, config.partition_case, config.n_clients,
                                         derive_seed(seed, kPurposePartition, 0));

    SeedOutputs outputs;
    ExperimentResult fedveca_result = run_federated(Algo::fedveca, config, seed, train,
                                                    test, plan, std::nullopt);
    outputs.fedveca = std::move(fedveca_result.records);

    std::vector<std::size_t> shard_sizes(plan.shards.size());
    for (std::size_t i = 0; i < plan.shards.size(); ++i) {
      shard_sizes[i] = plan.shards[i].size();
    }
    const auto fednova_tau = budget_tau(fedveca_result.ledger, config.rounds,
                                        config.batch_size, train.size(), shard_sizes);
    const std::uint32_t fedavg_tau = budget_tau_uniform(
        fedveca_result.ledger, config.rounds, config.batch_size, train.size(),
        config.n_clients);

    outputs.fedavg =
        run_federated(Algo::fedavg, config, seed, train, test, plan,
                      std::vector<std::uint32_t>(config.n_clients, fedavg_tau))
            .records;
    outputs.fednova =
        run_federated(Algo::fednova, config, seed, train, test, plan, fednova_tau)
            .records;
    outputs.centralized =
        run_centralized(fedveca_result.ledger.tau_all(), config.batch_size, spec, train,
                        test, config.eta, seed, config.rounds, config.n_clients)
            .records;
    per_seed.push_back(std::move(outputs));
  }

  std::vector<RoundRecord> records;
  const auto append_algo = [&](auto member) {
    for (const SeedOutputs& outputs : per_seed) {
      const auto& rows = outputs.*member;
      records.insert(records.end(), rows.begin(), rows.end());
    }
  };
  append_algo(&SeedOutputs::fedveca);
  append_algo(&SeedOutputs::fedavg);
  append_algo(&SeedOutputs::fednova);
  append_algo(&SeedOutputs::centralized);
  if (config.seeds.size() > 1) {
    const auto means = mean_rows(records);
    records.insert(records.end(), means.begin(), means.end());
  }
  return records;
}

}  // namespace fedveca
