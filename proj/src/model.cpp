#include "fedveca/model.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fedveca/error.hpp"

namespace fedveca {

namespace {

// Chunk width for the fixed-order reductions. Partial sums are produced per
// chunk (possibly in parallel) and combined serially in chunk order, so the
// result does not depend on the thread count.
constexpr std::size_t kChunk = 256;

void check_batch(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                 std::span<const std::uint32_t> batch, const char* op) {
  if (batch.empty()) throw ContractError(std::string(op) + ": empty batch");
  if (w.size() != spec.param_dim()) {
    throw ContractError(std::string(op) + ": parameter dimension " +
                        std::to_string(w.size()) + " does not match spec " +
                        std::to_string(spec.param_dim()));
  }
  if (ds.feature_dim != spec.feature_dim) {
    throw ContractError(std::string(op) + ": dataset feature_dim " +
                        std::to_string(ds.feature_dim) + " does not match spec " +
                        std::to_string(spec.feature_dim));
  }
}

inline double svm_margin(std::span<const double> w, std::span<const double> x,
                         std::int32_t label) {
  const std::uint32_t d = static_cast<std::uint32_t>(x.size());
  double score = w[d];  // bias
  for (std::uint32_t j = 0; j < d; ++j) score += w[j] * x[j];
  const double y = (label > 0) ? 1.0 : -1.0;
  return 1.0 - y * score;
}

inline double svm_sample_loss(std::span<const double> w, std::span<const double> x,
                              std::int32_t label) {
  const double m = svm_margin(w, x, label);
  return m > 0.0 ? m * m : 0.0;
}

// Accumulates the squared-hinge gradient of one sample into acc.
inline void svm_sample_grad(std::span<const double> w, std::span<const double> x,
                            std::int32_t label, double* acc) {
  const double m = svm_margin(w, x, label);
  if (m <= 0.0) return;
  const double y = (label > 0) ? 1.0 : -1.0;
  const double c = -2.0 * y * m;
  const std::uint32_t d = static_cast<std::uint32_t>(x.size());
  for (std::uint32_t j = 0; j < d; ++j) acc[j] += c * x[j];
  acc[d] += c;
}

// Per-class scores, stabilized log-sum-exp. `scores` has num_classes slots.
inline double logistic_lse(const ModelSpec& spec, std::span<const double> w,
                           std::span<const double> x, double* scores) {
  const std::uint32_t d = spec.feature_dim;
  const std::size_t block = static_cast<std::size_t>(d) + 1;
  double max_score = -HUGE_VAL;
  for (std::int32_t c = 0; c < spec.num_classes; ++c) {
    const double* wc = w.data() + static_cast<std::size_t>(c) * block;
    double s = wc[d];
    for (std::uint32_t j = 0; j < d; ++j) s += wc[j] * x[j];
    scores[c] = s;
    if (s > max_score) max_score = s;
  }
  double sum = 0.0;
  for (std::int32_t c = 0; c < spec.num_classes; ++c) {
    sum += std::exp(scores[c] - max_score);
  }
  return max_score + std::log(sum);
}

inline double logistic_sample_loss(const ModelSpec& spec, std::span<const double> w,
                                   std::span<const double> x, std::int32_t label,
                                   double* scores) {
  const double lse = logistic_lse(spec, w, x, scores);
  return lse - scores[label];
}

inline void logistic_sample_grad(const ModelSpec& spec, std::span<const double> w,
                                 std::span<const double> x, std::int32_t label,
                                 double* scores, double* acc) {
  const double lse = logistic_lse(spec, w, x, scores);
  const std::uint32_t d = spec.feature_dim;
  const std::size_t block = static_cast<std::size_t>(d) + 1;
  for (std::int32_t c = 0; c < spec.num_classes; ++c) {
    const double resid = std::exp(scores[c] - lse) - (c == label ? 1.0 : 0.0);
    double* gc = acc + static_cast<std::size_t>(c) * block;
    for (std::uint32_t j = 0; j < d; ++j) gc[j] += resid * x[j];
    gc[d] += resid;
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (feature_dim == 0) throw ContractError("model: feature_dim must be >= 1");
  if (kind == ModelKind::squared_svm && num_classes != 2) {
    throw ContractError("model: squared_svm requires num_classes == 2");
  }
  if (kind == ModelKind::multinomial_logistic && num_classes < 2) {
    throw ContractError("model: multinomial_logistic requires num_classes >= 2");
  }
  if (l2_reg < 0.0) throw ContractError("model: l2_reg must be >= 0");
}

double loss(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
            std::span<const std::uint32_t> batch) {
  check_batch(spec, w, ds, batch, "loss");
  const std::size_t n = batch.size();
  const std::size_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(nchunks, 0.0);

#pragma omp parallel for schedule(static) if (nchunks > 1)
  for (std::size_t chunk = 0; chunk < nchunks; ++chunk) {
    const std::size_t lo = chunk * kChunk;
    const std::size_t hi = std::min(lo + kChunk, n);
    double acc = 0.0;
    if (spec.kind == ModelKind::squared_svm) {
      for (std::size_t i = lo; i < hi; ++i) {
        acc += svm_sample_loss(w, ds.sample_features(batch[i]), ds.label(batch[i]));
      }
    } else {
      std::vector<double> scores(spec.num_classes);
      for (std::size_t i = lo; i < hi; ++i) {
        acc += logistic_sample_loss(spec, w, ds.sample_features(batch[i]),
                                    ds.label(batch[i]), scores.data());
      }
    }
    partial[chunk] = acc;
  }

  double total = 0.0;
  for (std::size_t chunk = 0; chunk < nchunks; ++chunk) total += partial[chunk];
  double value = total / static_cast<double>(n);
  if (spec.l2_reg > 0.0) value += 0.5 * spec.l2_reg * dot(w, w);
  if (!std::isfinite(value)) throw NumericalError("loss: non-finite value");
  return value;
}

ParamVector grad(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                 std::span<const std::uint32_t> batch) {
  check_batch(spec, w, ds, batch, "grad");
  const std::size_t n = batch.size();
  const std::size_t pdim = spec.param_dim();
  const std::size_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(nchunks * pdim, 0.0);

#pragma omp parallel for schedule(static) if (nchunks > 1)
  for (std::size_t chunk = 0; chunk < nchunks; ++chunk) {
    const std::size_t lo = chunk * kChunk;
    const std::size_t hi = std::min(lo + kChunk, n);
    double* acc = partial.data() + chunk * pdim;
    if (spec.kind == ModelKind::squared_svm) {
      for (std::size_t i = lo; i < hi; ++i) {
        svm_sample_grad(w, ds.sample_features(batch[i]), ds.label(batch[i]), acc);
      }
    } else {
      std::vector<double> scores(spec.num_classes);
      for (std::size_t i = lo; i < hi; ++i) {
        logistic_sample_grad(spec, w, ds.sample_features(batch[i]),
                             ds.label(batch[i]), scores.data(), acc);
      }
    }
  }

  ParamVector g(pdim, 0.0);
  for (std::size_t chunk = 0; chunk < nchunks; ++chunk) {
    const double* acc = partial.data() + chunk * pdim;
    for (std::size_t j = 0; j < pdim; ++j) g[j] += acc[j];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < pdim; ++j) g[j] *= inv_n;
  if (spec.l2_reg > 0.0) {
    for (std::size_t j = 0; j < pdim; ++j) g[j] += spec.l2_reg * w[j];
  }
  check_finite(g, "grad");
  return g;
}

ParamVector full_grad(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                      std::span<const std::uint32_t> shard) {
  if (shard.empty()) throw ContractError("full_grad: empty shard");
  return grad(spec, w, ds, shard);
}

namespace reference {

double loss(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
            std::span<const std::uint32_t> batch) {
  check_batch(spec, w, ds, batch, "reference::loss");
  double total = 0.0;
  std::vector<double> scores(spec.num_classes);
  for (std::uint32_t i : batch) {
    if (spec.kind == ModelKind::squared_svm) {
      total += svm_sample_loss(w, ds.sample_features(i), ds.label(i));
    } else {
      total += logistic_sample_loss(spec, w, ds.sample_features(i), ds.label(i),
                                    scores.data());
    }
  }
  double value = total / static_cast<double>(batch.size());
  if (spec.l2_reg > 0.0) value += 0.5 * spec.l2_reg * dot(w, w);
  return value;
}

ParamVector grad(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                 std::span<const std::uint32_t> batch) {
  check_batch(spec, w, ds, batch, "reference::grad");
  const std::size_t pdim = spec.param_dim();
  ParamVector g(pdim, 0.0);
  std::vector<double> scores(spec.num_classes);
  for (std::uint32_t i : batch) {
    if (spec.kind == ModelKind::squared_svm) {
      svm_sample_grad(w, ds.sample_features(i), ds.label(i), g.data());
    } else {
      logistic_sample_grad(spec, w, ds.sample_features(i), ds.label(i),
                           scores.data(), g.data());
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t j = 0; j < pdim; ++j) g[j] *= inv_n;
  if (spec.l2_reg > 0.0) {
    for (std::size_t j = 0; j < pdim; ++j) g[j] += spec.l2_reg * w[j];
  }
  return g;
}

}  // namespace reference

}  // namespace fedveca
