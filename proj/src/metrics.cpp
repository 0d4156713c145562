#include "fedveca/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedveca/error.hpp"

namespace fedveca {

std::pair<double, double> evaluate(const ModelSpec& spec, const ParamVector& w,
                                   const Dataset& test_set) {
  test_set.validate();
  std::vector<std::uint32_t> all(test_set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  const double mean_loss = loss(spec, w, test_set, all);

  std::size_t correct = 0;
  const std::uint32_t d = spec.feature_dim;
  if (spec.kind == ModelKind::squared_svm) {
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const auto x = test_set.sample_features(i);
      double score = w[d];
      for (std::uint32_t j = 0; j < d; ++j) score += w[j] * x[j];
      const std::int32_t pred = score >= 0.0 ? 1 : 0;  // score 0 predicts +1
      correct += (pred == test_set.label(i));
    }
  } else {
    const std::size_t block = static_cast<std::size_t>(d) + 1;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const auto x = test_set.sample_features(i);
      std::int32_t best = 0;
      double best_score = -HUGE_VAL;
      for (std::int32_t c = 0; c < spec.num_classes; ++c) {
        const double* wc = w.data() + static_cast<std::size_t>(c) * block;
        double s = wc[d];
        for (std::uint32_t j = 0; j < d; ++j) s += wc[j] * x[j];
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      correct += (best == test_set.label(i));
    }
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(test_set.size());
  return {mean_loss, accuracy};
}

namespace {

// %.17g-style rendering via to_chars: locale-independent and round-trippable.
void append_double(std::string& out, double x) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

void append_header(std::string& out, std::size_t n_clients) {
  out += "round,algo,seed,loss,accuracy,tau_k,eta_tau_L";
  const char* groups[] = {"tau_", "beta_", "delta_", "A_"};
  for (const char* g : groups) {
    for (std::size_t i = 0; i < n_clients; ++i) {
      out += ',';
      out += g;
      out += std::to_string(i);
    }
  }
  out += '\n';
}

void append_group(std::string& out, std::span<const double> values,
                  std::size_t n_clients) {
  for (std::size_t i = 0; i < n_clients; ++i) {
    out += ',';
    append_double(out, i < values.size() ? values[i] : 0.0);
  }
}

}  // namespace

std::string metrics_csv_string(std::span<const RoundRecord> records) {
  if (records.empty()) throw ContractError("write_metrics: no records");
  std::size_t n_clients = 0;
  for (const RoundRecord& r : records) n_clients = std::max(n_clients, r.tau.size());

  std::string out;
  append_header(out, n_clients);
  for (const RoundRecord& r : records) {
    out += std::to_string(r.round);
    out += ',';
    out += r.algo;
    out += ',';
    out += r.seed;
    out += ',';
    append_double(out, r.loss);
    out += ',';
    append_double(out, r.accuracy);
    out += ',';
    append_double(out, r.tau_eff);
    out += ',';
    append_double(out, r.eta_tau_L);
    append_group(out, r.tau, n_clients);
    append_group(out, r.beta, n_clients);
    append_group(out, r.delta, n_clients);
    append_group(out, r.A, n_clients);
    out += '\n';
  }
  return out;
}

void write_metrics_csv(std::span<const RoundRecord> records, std::ostream& out) {
  out << metrics_csv_string(records);
}

void write_metrics_json(std::span<const RoundRecord> records, std::ostream& out) {
  if (records.empty()) throw ContractError("write_metrics: no records");
  for (const RoundRecord& r : records) {
    nlohmann::ordered_json row;
    row["round"] = r.round;
    row["algo"] = r.algo;
    row["seed"] = r.seed;
    row["loss"] = r.loss;
    row["accuracy"] = r.accuracy;
    row["tau_k"] = r.tau_eff;
    row["eta_tau_L"] = r.eta_tau_L;
    row["tau"] = r.tau;
    row["beta"] = r.beta;
    row["delta"] = r.delta;
    row["A"] = r.A;
    out << row.dump() << '\n';
  }
}

void write_metrics_file(std::span<const RoundRecord> records, const std::string& path,
                        bool json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  if (json) {
    write_metrics_json(records, out);
  } else {
    write_metrics_csv(records, out);
  }
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError("metrics csv: bad numeric field '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<RoundRecord> read_metrics_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw IoError("metrics csv: empty file");
  const auto columns = split_csv_line(header);
  if (columns.size() < 7 || (columns.size() - 7) % 4 != 0) {
    throw IoError("metrics csv: unexpected header layout");
  }
  const std::size_t n_clients = (columns.size() - 7) / 4;

  std::vector<RoundRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != columns.size()) {
      throw IoError("metrics csv: row width does not match header");
    }
    RoundRecord r;
    r.round = static_cast<std::uint32_t>(std::stoul(fields[0]));
    r.algo = fields[1];
    r.seed = fields[2];
    r.loss = parse_double(fields[3]);
    r.accuracy = parse_double(fields[4]);
    r.tau_eff = parse_double(fields[5]);
    r.eta_tau_L = parse_double(fields[6]);
    std::size_t pos = 7;
    for (auto* group : {&r.tau, &r.beta, &r.delta, &r.A}) {
      group->resize(n_clients);
      for (std::size_t i = 0; i < n_clients; ++i) {
        (*group)[i] = parse_double(fields[pos++]);
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<RoundRecord> mean_rows(std::span<const RoundRecord> records) {
  // Keyed by (algo, round); insertion order follows the input.
  std::vector<std::pair<std::string, std::uint32_t>> order;
  std::map<std::pair<std::string, std::uint32_t>, std::vector<const RoundRecord*>> groups;
  for (const RoundRecord& r : records) {
    const auto key = std::make_pair(r.algo, r.round);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }

  std::vector<RoundRecord> means;
  means.reserve(order.size());
  for (const auto& key : order) {
    const auto& group = groups.at(key);
    RoundRecord m;
    m.round = key.second;
    m.algo = key.first;
    m.seed = "mean";
    const double inv = 1.0 / static_cast<double>(group.size());
    const std::size_t n_clients = group.front()->tau.size();
    m.tau.assign(n_clients, 0.0);
    m.beta.assign(n_clients, 0.0);
    m.delta.assign(n_clients, 0.0);
    m.A.assign(n_clients, 0.0);
    for (const RoundRecord* r : group) {
      m.loss += r->loss * inv;
      m.accuracy += r->accuracy * inv;
      m.tau_eff += r->tau_eff * inv;
      m.eta_tau_L += r->eta_tau_L * inv;
      for (std::size_t i = 0; i < n_clients; ++i) {
        m.tau[i] += (i < r->tau.size() ? r->tau[i] : 0.0) * inv;
        m.beta[i] += (i < r->beta.size() ? r->beta[i] : 0.0) * inv;
        m.delta[i] += (i < r->delta.size() ? r->delta[i] : 0.0) * inv;
        m.A[i] += (i < r->A.size() ? r->A[i] : 0.0) * inv;
      }
    }
    means.push_back(std::move(m));
  }
  return means;
}

}  // namespace fedveca
