#include "fedveca/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "fedveca/error.hpp"

namespace fedveca {

namespace {

// Minimal TOML reader covering what experiment configs use: single-level
// [section] tables, string/integer/float/boolean scalars, flat arrays, and
// '#' comments. No C++ TOML library ships with this toolchain.
struct TomlValue {
  std::variant<std::string, std::int64_t, double, bool,
               std::vector<std::int64_t>, std::vector<double>>
      value;
  std::size_t line = 0;
};

using TomlTable = std::map<std::string, TomlValue>;

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw ConfigError("config parse error at line " + std::to_string(line) + ": " + what);
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

bool valid_key(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
      return false;
    }
  }
  return true;
}

TomlValue parse_scalar(std::string_view text, std::size_t line);

TomlValue parse_array(std::string_view text, std::size_t line) {
  text = strip(text);
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    parse_fail(line, "malformed array");
  }
  text = strip(text.substr(1, text.size() - 2));

  std::vector<std::int64_t> ints;
  std::vector<double> reals;
  bool any_real = false;
  while (!text.empty()) {
    const std::size_t comma = text.find(',');
    std::string_view item = strip(text.substr(0, comma));
    if (item.empty()) parse_fail(line, "empty array element");
    TomlValue v = parse_scalar(item, line);
    if (const auto* i = std::get_if<std::int64_t>(&v.value)) {
      ints.push_back(*i);
      reals.push_back(static_cast<double>(*i));
    } else if (const auto* d = std::get_if<double>(&v.value)) {
      any_real = true;
      reals.push_back(*d);
    } else {
      parse_fail(line, "arrays may contain only numbers");
    }
    if (comma == std::string_view::npos) break;
    text = strip(text.substr(comma + 1));
  }
  TomlValue out;
  out.line = line;
  if (any_real) {
    out.value = reals;
  } else {
    out.value = ints;
  }
  return out;
}

TomlValue parse_scalar(std::string_view text, std::size_t line) {
  TomlValue out;
  out.line = line;
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    out.value = std::string(text.substr(1, text.size() - 2));
    return out;
  }
  if (text == "true") {
    out.value = true;
    return out;
  }
  if (text == "false") {
    out.value = false;
    return out;
  }
  if (text.front() == '[') return parse_array(text, line);

  const bool looks_real = text.find_first_of(".eE") != std::string_view::npos &&
                          text.find("0x") != 0;
  if (!looks_real) {
    std::int64_t i = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
    if (ec == std::errc() && ptr == text.data() + text.size()) {
      out.value = i;
      return out;
    }
  }
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ec == std::errc() && ptr == text.data() + text.size()) {
    out.value = d;
    return out;
  }
  parse_fail(line, "cannot parse value '" + std::string(text) + "'");
}

// Strips a trailing comment that is not inside a string literal.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = strip(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_fail(line_no, "unterminated section header");
      std::string_view name = strip(line.substr(1, line.size() - 2));
      if (!valid_key(name)) parse_fail(line_no, "bad section name");
      section = std::string(name);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) parse_fail(line_no, "expected key = value");
    std::string_view key = strip(line.substr(0, eq));
    std::string_view value = strip(line.substr(eq + 1));
    if (!valid_key(key)) parse_fail(line_no, "bad key '" + std::string(key) + "'");
    if (value.empty()) parse_fail(line_no, "missing value");
    const std::string full_key =
        section.empty() ? std::string(key) : section + "." + std::string(key);
    if (table.contains(full_key)) parse_fail(line_no, "duplicate key " + full_key);
    table[full_key] = parse_scalar(value, line_no);
  }
  return table;
}

// Typed getters; absent keys leave the destination at its default.
struct ConfigReader {
  TomlTable table;

  template <typename T>
  const T* find(const std::string& key) const {
    const auto it = table.find(key);
    if (it == table.end()) return nullptr;
    const T* v = std::get_if<T>(&it->second.value);
    if (v == nullptr) {
      throw ConfigError("config: wrong type for '" + key + "' (line " +
                        std::to_string(it->second.line) + ")");
    }
    return v;
  }

  void get(const std::string& key, std::string& dst) const {
    if (const auto* v = find<std::string>(key)) dst = *v;
  }
  void get(const std::string& key, bool& dst) const {
    if (const auto* v = find<bool>(key)) dst = *v;
  }
  void get(const std::string& key, double& dst) const {
    const auto it = table.find(key);
    if (it == table.end()) return;
    if (const auto* d = std::get_if<double>(&it->second.value)) {
      dst = *d;
    } else if (const auto* i = std::get_if<std::int64_t>(&it->second.value)) {
      dst = static_cast<double>(*i);
    } else {
      throw ConfigError("config: wrong type for '" + key + "'");
    }
  }
  template <typename Int>
  void get_int(const std::string& key, Int& dst) const {
    if (const auto* v = find<std::int64_t>(key)) {
      if (*v < 0) throw ConfigError("config: '" + key + "' must be nonnegative");
      dst = static_cast<Int>(*v);
    }
  }
  bool has(const std::string& key) const { return table.contains(key); }
};

}  // namespace

void ExperimentConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("config: eta must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("config: alpha must lie in (0, 1)");
  }
  if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (tau_initial < 2 || tau_initial > max_tau) {
    throw ConfigError("config: tau_initial must lie in [2, max_tau]");
  }
  if (n_clients < 1) throw ConfigError("config: n_clients must be >= 1");
  if (l2_reg < 0.0) throw ConfigError("config: l2_reg must be >= 0");
  if (dataset.source == DatasetConfig::Source::synthetic) {
    if (dataset.n < static_cast<std::size_t>(dataset.classes) || dataset.classes < 2) {
      throw ConfigError("config: dataset.n must cover dataset.classes >= 2");
    }
    if (!(dataset.separation > 0.0)) {
      throw ConfigError("config: dataset.separation must be > 0");
    }
    if (dataset.test_n < 1) throw ConfigError("config: dataset.test_n must be >= 1");
  } else {
    if (dataset.images.empty() || dataset.labels.empty() ||
        dataset.test_images.empty() || dataset.test_labels.empty()) {
      throw ConfigError("config: idx dataset needs images/labels/test_images/test_labels");
    }
  }
  if (fixed_tau) {
    if (fixed_tau->size() != n_clients) {
      throw ConfigError("config: fixed_tau must list one value per client");
    }
    for (std::uint32_t t : *fixed_tau) {
      if (t < 1) throw ConfigError("config: fixed_tau entries must be >= 1");
    }
  }
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (model_kind == ModelKind::squared_svm &&
      dataset.source == DatasetConfig::Source::synthetic && dataset.classes != 2 &&
      dataset.binarize == DatasetConfig::Binarize::none) {
    throw ConfigError(
        "config: squared_svm needs a 2-class dataset (or binarize = \"even_odd\")");
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  ConfigReader reader{parse_toml(text)};
  ExperimentConfig cfg;

  std::string algo = algo_name(cfg.algo);
  reader.get("algo", algo);
  cfg.algo = algo_from_name(algo);

  std::string transport = "inproc";
  reader.get("transport", transport);
  if (transport == "inproc") {
    cfg.transport = TransportKind::inproc;
  } else if (transport.rfind("socket:", 0) == 0) {
    cfg.transport = TransportKind::socket;
    unsigned long port = 0;
    try {
      port = std::stoul(transport.substr(7));
    } catch (const std::exception&) {
      throw ConfigError("config: bad socket port in transport '" + transport + "'");
    }
    if (port > 65535) throw ConfigError("config: socket port out of range");
    cfg.socket_port = static_cast<std::uint16_t>(port);
  } else {
    throw ConfigError("config: transport must be 'inproc' or 'socket:<port>'");
  }

  if (const auto* seeds = reader.find<std::vector<std::int64_t>>("seeds")) {
    cfg.seeds.assign(seeds->begin(), seeds->end());
  } else {
    std::uint64_t seed = cfg.seeds.front();
    reader.get_int("seed", seed);
    cfg.seeds = {seed};
  }
  reader.get("out", cfg.out_path);
  reader.get("json", cfg.json_output);

  std::string model = "squared_svm";
  reader.get("model.kind", model);
  if (model == "squared_svm") {
    cfg.model_kind = ModelKind::squared_svm;
  } else if (model == "multinomial_logistic") {
    cfg.model_kind = ModelKind::multinomial_logistic;
  } else {
    throw ConfigError("config: model.kind must be squared_svm or multinomial_logistic");
  }
  reader.get("model.l2_reg", cfg.l2_reg);

  std::string source = "synthetic";
  reader.get("dataset.source", source);
  if (source == "synthetic") {
    cfg.dataset.source = DatasetConfig::Source::synthetic;
  } else if (source == "idx") {
    cfg.dataset.source = DatasetConfig::Source::idx;
  } else {
    throw ConfigError("config: dataset.source must be synthetic or idx");
  }
  reader.get_int("dataset.n", cfg.dataset.n);
  reader.get_int("dataset.feature_dim", cfg.dataset.feature_dim);
  reader.get_int("dataset.classes", cfg.dataset.classes);
  reader.get("dataset.separation", cfg.dataset.separation);
  reader.get_int("dataset.test_n", cfg.dataset.test_n);
  reader.get("dataset.images", cfg.dataset.images);
  reader.get("dataset.labels", cfg.dataset.labels);
  reader.get("dataset.test_images", cfg.dataset.test_images);
  reader.get("dataset.test_labels", cfg.dataset.test_labels);
  std::string binarize = "none";
  reader.get("dataset.binarize", binarize);
  if (binarize == "none") {
    cfg.dataset.binarize = DatasetConfig::Binarize::none;
  } else if (binarize == "even_odd") {
    cfg.dataset.binarize = DatasetConfig::Binarize::even_odd;
  } else {
    throw ConfigError("config: dataset.binarize must be none or even_odd");
  }

  std::string pcase = "case1";
  reader.get("partition.case", pcase);
  if (pcase == "case1") {
    cfg.partition_case = PartitionCase::case1;
  } else if (pcase == "case2") {
    cfg.partition_case = PartitionCase::case2;
  } else if (pcase == "case3") {
    cfg.partition_case = PartitionCase::case3;
  } else {
    throw ConfigError("config: partition.case must be case1, case2 or case3");
  }
  reader.get_int("partition.n_clients", cfg.n_clients);

  reader.get("training.eta", cfg.eta);
  reader.get("training.alpha", cfg.alpha);
  reader.get_int("training.batch_size", cfg.batch_size);
  reader.get_int("training.rounds", cfg.rounds);
  reader.get_int("training.tau_initial", cfg.tau_initial);
  reader.get_int("training.max_tau", cfg.max_tau);
  reader.get("training.beta_full_shard", cfg.beta_full_shard);
  if (reader.has("training.fixed_tau")) {
    if (const auto* taus = reader.find<std::vector<std::int64_t>>("training.fixed_tau")) {
      cfg.fixed_tau = std::vector<std::uint32_t>(taus->begin(), taus->end());
    } else {
      std::int64_t tau = 0;
      reader.get_int("training.fixed_tau", tau);
      cfg.fixed_tau = std::vector<std::uint32_t>(
          cfg.n_clients, static_cast<std::uint32_t>(tau));
    }
  }
  if (reader.has("training.tau_all")) {
    std::uint64_t total = 0;
    reader.get_int("training.tau_all", total);
    cfg.tau_all = total;
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::ostringstream out;
  out.precision(17);
  out << "algo = \"" << algo_name(config.algo) << "\"\n";
  out << "transport = \"";
  if (config.transport == TransportKind::inproc) {
    out << "inproc";
  } else {
    out << "socket:" << config.socket_port;
  }
  out << "\"\n";
  out << "seeds = [";
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    if (i > 0) out << ", ";
    out << config.seeds[i];
  }
  out << "]\n";
  out << "out = \"" << config.out_path << "\"\n";
  out << "json = " << (config.json_output ? "true" : "false") << "\n";

  out << "\n[model]\n";
  out << "kind = \""
      << (config.model_kind == ModelKind::squared_svm ? "squared_svm"
                                                      : "multinomial_logistic")
      << "\"\n";
  out << "l2_reg = " << config.l2_reg << "\n";

  out << "\n[dataset]\n";
  if (config.dataset.source == DatasetConfig::Source::synthetic) {
    out << "source = \"synthetic\"\n";
    out << "n = " << config.dataset.n << "\n";
    out << "feature_dim = " << config.dataset.feature_dim << "\n";
    out << "classes = " << config.dataset.classes << "\n";
    out << "separation = " << config.dataset.separation << "\n";
    out << "test_n = " << config.dataset.test_n << "\n";
  } else {
    out << "source = \"idx\"\n";
    out << "images = \"" << config.dataset.images << "\"\n";
    out << "labels = \"" << config.dataset.labels << "\"\n";
    out << "test_images = \"" << config.dataset.test_images << "\"\n";
    out << "test_labels = \"" << config.dataset.test_labels << "\"\n";
  }
  out << "binarize = \""
      << (config.dataset.binarize == DatasetConfig::Binarize::none ? "none" : "even_odd")
      << "\"\n";

  out << "\n[partition]\n";
  out << "case = \"";
  switch (config.partition_case) {
    case PartitionCase::case1: out << "case1"; break;
    case PartitionCase::case2: out << "case2"; break;
    case PartitionCase::case3: out << "case3"; break;
  }
  out << "\"\n";
  out << "n_clients = " << config.n_clients << "\n";

  out << "\n[training]\n";
  out << "eta = " << config.eta << "\n";
  out << "alpha = " << config.alpha << "\n";
  out << "batch_size = " << config.batch_size << "\n";
  out << "rounds = " << config.rounds << "\n";
  out << "tau_initial = " << config.tau_initial << "\n";
  out << "max_tau = " << config.max_tau << "\n";
  out << "beta_full_shard = " << (config.beta_full_shard ? "true" : "false") << "\n";
  if (config.fixed_tau) {
    out << "fixed_tau = [";
    for (std::size_t i = 0; i < config.fixed_tau->size(); ++i) {
      if (i > 0) out << ", ";
      out << (*config.fixed_tau)[i];
    }
    out << "]\n";
  }
  if (config.tau_all) out << "tau_all = " << *config.tau_all << "\n";
  return out.str();
}

}  // namespace fedveca
