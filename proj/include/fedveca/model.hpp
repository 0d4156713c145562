#pragma once

#include <cstdint>
#include <span>

#include "fedveca/dataset.hpp"
#include "fedveca/vector_ops.hpp"

namespace fedveca {

enum class ModelKind { squared_svm, multinomial_logistic };

// Convex linear classifier family. The bias is carried as one extra
// parameter per class block, so the parameter layout is
//   squared_svm:          [w_0..w_{d-1}, b]
//   multinomial_logistic: [class 0: w_0..w_{d-1}, b | class 1: ... | ...]
struct ModelSpec {
  ModelKind kind = ModelKind::squared_svm;
  std::uint32_t feature_dim = 0;
  std::int32_t num_classes = 2;
  double l2_reg = 0.0;

  std::size_t param_dim() const {
    const std::size_t block = static_cast<std::size_t>(feature_dim) + 1;
    return kind == ModelKind::squared_svm
               ? block
               : block * static_cast<std::size_t>(num_classes);
  }

  void validate() const;
};

// Mean per-sample loss over the batch plus (l2_reg/2)*||w||^2.
// squared_svm uses max(0, 1 - y (w.x + b))^2 with y in {-1, +1} mapped from
// labels {0, 1}; multinomial_logistic uses the negative log-softmax of the
// true class. Batches are index lists into the dataset.
double loss(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
            std::span<const std::uint32_t> batch);

// Exact gradient of loss at w: mean over the batch plus l2_reg * w.
// Accumulation is chunked in fixed order, so results are identical for any
// number of OpenMP threads.
ParamVector grad(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                 std::span<const std::uint32_t> batch);

// grad over an entire local shard; same deterministic chunked kernel.
ParamVector full_grad(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                      std::span<const std::uint32_t> shard);

// Plain one-sample-at-a-time loops kept as the reference implementation for
// testing and benchmarking the parallel kernels.
namespace reference {
double loss(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
            std::span<const std::uint32_t> batch);
ParamVector grad(const ModelSpec& spec, const ParamVector& w, const Dataset& ds,
                 std::span<const std::uint32_t> batch);
}  // namespace reference

}  // namespace fedveca
