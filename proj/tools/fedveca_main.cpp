#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedveca/baselines.hpp"
#include "fedveca/config.hpp"
#include "fedveca/error.hpp"
#include "fedveca/log.hpp"
#include "fedveca/metrics.hpp"

namespace {

using namespace fedveca;

struct CliOverrides {
  std::string config_path;
  std::string algo;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string transport;
  bool json = false;
};

ExperimentConfig load_config(const CliOverrides& cli) {
  ExperimentConfig config = parse_config(cli.config_path);
  if (!cli.algo.empty()) config.algo = algo_from_name(cli.algo);
  if (!cli.seeds.empty()) config.seeds = cli.seeds;
  if (!cli.out.empty()) config.out_path = cli.out;
  if (cli.json) config.json_output = true;
  if (!cli.transport.empty()) {
    if (cli.transport == "inproc") {
      config.transport = TransportKind::inproc;
      config.socket_port = 0;
    } else if (cli.transport.rfind("socket:", 0) == 0) {
      config.transport = TransportKind::socket;
      config.socket_port =
          static_cast<std::uint16_t>(std::stoul(cli.transport.substr(7)));
    } else {
      throw ConfigError("--transport must be 'inproc' or 'socket:<port>'");
    }
  }
  config.validate();
  return config;
}

int cmd_run(const CliOverrides& cli) {
  const ExperimentConfig config = load_config(cli);
  const auto records = run_multi_seed(config);
  write_metrics_file(records, config.out_path, config.json_output);
  std::printf("wrote %zu rows to %s\n", records.size(), config.out_path.c_str());
  return 0;
}

int cmd_compare(const CliOverrides& cli) {
  const ExperimentConfig config = load_config(cli);
  const auto records = run_compare(config);
  write_metrics_file(records, config.out_path, config.json_output);
  std::printf("wrote %zu rows to %s\n", records.size(), config.out_path.c_str());
  return 0;
}

int cmd_validate(const CliOverrides& cli) {
  load_config(cli);
  std::printf("%s: OK\n", cli.config_path.c_str());
  return 0;
}

int cmd_partition_inspect(const CliOverrides& cli) {
  const ExperimentConfig config = load_config(cli);
  for (std::uint64_t seed : config.seeds) {
    auto [train, test] = load_datasets(config, seed);
    const PartitionPlan plan = partition(train, config.partition_case, config.n_clients,
                                         derive_seed(seed, kPurposePartition, 0));
    std::printf("seed %llu: %zu samples, %d labels\n",
                static_cast<unsigned long long>(seed), train.size(), train.num_classes);
    for (std::size_t c = 0; c < plan.shards.size(); ++c) {
      std::vector<std::size_t> histogram(train.num_classes, 0);
      for (std::uint32_t idx : plan.shards[c]) histogram[train.label(idx)]++;
      std::printf("  client %zu (%zu samples):", c, plan.shards[c].size());
      for (std::size_t label = 0; label < histogram.size(); ++label) {
        std::printf(" %zu:%zu", label, histogram[label]);
      }
      std::printf("\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedVeca federated-learning simulation engine"};
  app.require_subcommand(1);

  CliOverrides cli;
  app.add_option("--config", cli.config_path, "TOML experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--algo", cli.algo, "fedveca|fedavg|fednova|centralized");
  app.add_option("--seed", cli.seeds, "seed list (comma separated)")->delimiter(',');
  app.add_option("--out", cli.out, "output metrics path");
  app.add_option("--transport", cli.transport, "inproc or socket:<port>");
  app.add_flag("--json", cli.json, "emit JSON lines instead of CSV");

  auto* run = app.add_subcommand("run", "run one experiment");
  auto* compare = app.add_subcommand(
      "compare", "run FedVeca, budget-matched FedAvg/FedNova, and centralized SGD");
  auto* validate = app.add_subcommand("validate-config", "parse and validate the config");
  auto* part = app.add_subcommand("partition", "partition utilities");
  auto* inspect = part->add_subcommand("inspect", "print per-client label histograms");
  part->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(cli);
    if (compare->parsed()) return cmd_compare(cli);
    if (validate->parsed()) return cmd_validate(cli);
    if (part->parsed() && inspect->parsed()) return cmd_partition_inspect(cli);
    std::fprintf(stderr, "error: no subcommand selected\n");
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
