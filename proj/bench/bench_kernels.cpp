// Timings for the chunked OpenMP gradient/loss kernels against the serial
// reference implementation, plus a consistency check between the two.
//
//   ./fedveca_bench [repeats]
//   OMP_NUM_THREADS controls the parallel configuration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <omp.h>

#include "fedveca/dataset.hpp"
#include "fedveca/model.hpp"
#include "fedveca/rng.hpp"

using namespace fedveca;
using clock_type = std::chrono::steady_clock;

namespace {

double time_ms(const auto& fn, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = clock_type::now();
    fn();
    const auto t1 = clock_type::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

void bench_model(const char* name, const ModelSpec& spec, const Dataset& ds,
                 int repeats) {
  std::vector<std::uint32_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);

  RngStream rng(11);
  ParamVector w(spec.param_dim());
  for (auto& x : w) x = 0.05 * rng.next_gaussian();

  const ParamVector g_par = grad(spec, w, ds, all);
  const ParamVector g_ref = reference::grad(spec, w, ds, all);
  const double gdiff = max_abs_diff(g_par, g_ref);
  const double ldiff = std::fabs(loss(spec, w, ds, all) - reference::loss(spec, w, ds, all));

  const double t_grad_ref = time_ms([&] { reference::grad(spec, w, ds, all); }, repeats);
  const double t_grad_par = time_ms([&] { grad(spec, w, ds, all); }, repeats);
  const double t_loss_ref = time_ms([&] { reference::loss(spec, w, ds, all); }, repeats);
  const double t_loss_par = time_ms([&] { loss(spec, w, ds, all); }, repeats);

  std::printf("%-22s %8zu %8.2f %8.2f %6.2fx %8.2f %8.2f %6.2fx  %.2e/%.2e\n", name,
              ds.size(), t_grad_ref, t_grad_par, t_grad_ref / t_grad_par, t_loss_ref,
              t_loss_par, t_loss_ref / t_loss_par, gdiff, ldiff);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d, repeats: %d\n", omp_get_max_threads(), repeats);
  std::printf("%-22s %8s %8s %8s %7s %8s %8s %7s  %s\n", "kernel", "n", "grad_s",
              "grad_p", "speedup", "loss_s", "loss_p", "speedup", "maxdiff(g/l)");

  for (std::size_t n : {20000, 100000}) {
    const Dataset svm_data = gen_synthetic(n, 64, 2, 4.0, 42);
    const ModelSpec svm{ModelKind::squared_svm, 64, 2, 0.0};
    bench_model("squared_svm", svm, svm_data, repeats);
  }
  for (std::size_t n : {20000, 100000}) {
    const Dataset logit_data = gen_synthetic(n, 64, 10, 4.0, 43);
    const ModelSpec logit{ModelKind::multinomial_logistic, 64, 10, 0.0};
    bench_model("multinomial_logistic", logit, logit_data, repeats);
  }
  return 0;
}
