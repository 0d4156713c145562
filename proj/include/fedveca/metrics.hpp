#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedveca/dataset.hpp"
#include "fedveca/model.hpp"

namespace fedveca {

// One CSV row: the state of an experiment after a round.
struct RoundRecord {
  std::uint32_t round = 0;
  std::string algo;
  std::string seed;  // decimal seed, or "mean" for the cross-seed average row
  double loss = 0.0;
  double accuracy = 0.0;
  double tau_eff = 0.0;
  double eta_tau_L = 0.0;
  std::vector<double> tau;    // per client; averaged rows hold fractional values
  std::vector<double> beta;   // per client (FedVeca only, else 0)
  std::vector<double> delta;  // per client (FedVeca only, else 0)
  std::vector<double> A;      // per client (FedVeca only, else 0)

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

// Mean test loss and prediction accuracy. Squared-SVM predicts +1 on a score
// of exactly zero; the logistic model takes the lowest argmax class on ties.
std::pair<double, double> evaluate(const ModelSpec& spec, const ParamVector& w,
                                   const Dataset& test_set);

// CSV with a fixed column layout:
// round,algo,seed,loss,accuracy,tau_k,eta_tau_L,tau_i...,beta_i...,delta_i...,A_i...
// UTF-8, '\n' line endings, '.' decimal separator, 17 significant digits.
void write_metrics_csv(std::span<const RoundRecord> records, std::ostream& out);
std::string metrics_csv_string(std::span<const RoundRecord> records);

// JSON-lines equivalent of the CSV.
void write_metrics_json(std::span<const RoundRecord> records, std::ostream& out);

void write_metrics_file(std::span<const RoundRecord> records, const std::string& path,
                        bool json);

// Parses write_metrics_csv output back into records.
std::vector<RoundRecord> read_metrics_csv(std::istream& in);

// Cross-seed "mean" pseudo-seed rows, one per (algo, round).
std::vector<RoundRecord> mean_rows(std::span<const RoundRecord> records);

}  // namespace fedveca
