#include "fedveca/vector_ops.hpp"

#include <cmath>
#include <string>

#include "fedveca/error.hpp"

namespace fedveca {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractError("dot: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

ParamVector axpy(double alpha, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ContractError("axpy: dimension mismatch (" + std::to_string(x.size()) +
                        " vs " + std::to_string(y.size()) + ")");
  }
  ParamVector r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] + alpha * x[i];
  return r;
}

void axpy_inplace(double alpha, std::span<const double> x, ParamVector& y) {
  if (x.size() != y.size()) {
    throw ContractError("axpy_inplace: dimension mismatch (" +
                        std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) {
    throw NumericalError(std::string("non-finite value in ") + what);
  }
}

ParamVector finite_diff_grad(const std::function<double(const ParamVector&)>& f,
                             const ParamVector& w, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: h must be positive");
  ParamVector g(w.size());
  ParamVector probe = w;
  for (std::size_t j = 0; j < w.size(); ++j) {
    probe[j] = w[j] + h;
    const double fwd = f(probe);
    probe[j] = w[j] - h;
    const double bwd = f(probe);
    probe[j] = w[j];
    if (!std::isfinite(fwd) || !std::isfinite(bwd)) {
      throw NumericalError("finite_diff_grad: non-finite function value");
    }
    g[j] = (fwd - bwd) / (2.0 * h);
  }
  return g;
}

}  // namespace fedveca
