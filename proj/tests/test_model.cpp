#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedveca/error.hpp"
#include "fedveca/model.hpp"
#include "fedveca/rng.hpp"
#include "fedveca/vector_ops.hpp"

using namespace fedveca;

namespace {

Dataset make_dataset(std::vector<std::vector<double>> rows, std::vector<std::int32_t> labels,
                     std::int32_t num_classes) {
  Dataset ds;
  ds.feature_dim = static_cast<std::uint32_t>(rows.front().size());
  ds.num_classes = num_classes;
  ds.labels = std::move(labels);
  for (const auto& row : rows) {
    ds.features.insert(ds.features.end(), row.begin(), row.end());
  }
  ds.validate();
  return ds;
}

std::vector<std::uint32_t> all_indices(const Dataset& ds) {
  std::vector<std::uint32_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
  return idx;
}

double max_rel_err(const ParamVector& got, const ParamVector& want) {
  double worst = 0.0;
  for (std::size_t j = 0; j < got.size(); ++j) {
    const double scale = std::max(1.0, std::fabs(want[j]));
    worst = std::max(worst, std::fabs(got[j] - want[j]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("squared_svm loss hand cases") {
  const ModelSpec spec{ModelKind::squared_svm, 2, 2, 0.0};
  const Dataset ds = make_dataset({{0.5, -1.0}, {2.0, 0.0}}, {1, 0}, 2);

  // Zero weights: margin term is 1^2 for any sample.
  const ParamVector zero(spec.param_dim(), 0.0);
  CHECK(loss(spec, zero, ds, std::vector<std::uint32_t>{0}) == 1.0);
  CHECK(loss(spec, zero, ds, std::vector<std::uint32_t>{1}) == 1.0);

  // A satisfied margin contributes nothing: w.x + b = 2 for sample 0 (y=+1).
  const ParamVector strong{4.0, 0.0, 0.0};
  CHECK(loss(spec, strong, ds, std::vector<std::uint32_t>{0}) == 0.0);

  CHECK_THROWS_AS(loss(spec, zero, ds, std::vector<std::uint32_t>{}), ContractError);
  CHECK_THROWS_AS(loss(spec, ParamVector{1.0}, ds, std::vector<std::uint32_t>{0}),
                  ContractError);
}

TEST_CASE("multinomial_logistic loss at zero weights is ln(C)") {
  const ModelSpec spec{ModelKind::multinomial_logistic, 3, 10, 0.0};
  Dataset ds = make_dataset({{0.1, 0.2, 0.3}}, {7}, 10);
  const ParamVector zero(spec.param_dim(), 0.0);
  CHECK(loss(spec, zero, ds, all_indices(ds)) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("squared_svm gradient at zero weights, single sample") {
  const ModelSpec spec{ModelKind::squared_svm, 3, 2, 0.0};
  const Dataset ds = make_dataset({{0.0, 1.0, 0.0}}, {1}, 2);  // x = e_1, y = +1
  const ParamVector zero(spec.param_dim(), 0.0);
  const ParamVector g = grad(spec, zero, ds, all_indices(ds));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == -2.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == -2.0);  // bias

  // Against the finite-difference oracle.
  const auto f = [&](const ParamVector& w) { return loss(spec, w, ds, all_indices(ds)); };
  CHECK(max_rel_err(g, finite_diff_grad(f, zero, 1e-5)) < 1e-6);
}

TEST_CASE("satisfied margin has zero gradient") {
  const ModelSpec spec{ModelKind::squared_svm, 2, 2, 0.0};
  const Dataset ds = make_dataset({{3.0, 0.0}}, {1}, 2);
  const ParamVector w{1.0, 0.0, 0.0};  // score 3, margin satisfied
  for (double gj : grad(spec, w, ds, all_indices(ds))) CHECK(gj == 0.0);
}

TEST_CASE("logistic gradient at zero is the softmax residual") {
  const std::int32_t C = 4;
  const ModelSpec spec{ModelKind::multinomial_logistic, 2, C, 0.0};
  const Dataset ds = make_dataset({{0.5, -1.5}}, {2}, C);
  const ParamVector zero(spec.param_dim(), 0.0);
  const ParamVector g = grad(spec, zero, ds, all_indices(ds));

  const double unif = 1.0 / C;
  for (std::int32_t c = 0; c < C; ++c) {
    const double resid = unif - (c == 2 ? 1.0 : 0.0);
    const std::size_t base = static_cast<std::size_t>(c) * 3;
    CHECK(g[base + 0] == doctest::Approx(resid * 0.5).epsilon(1e-12));
    CHECK(g[base + 1] == doctest::Approx(resid * -1.5).epsilon(1e-12));
    CHECK(g[base + 2] == doctest::Approx(resid).epsilon(1e-12));
  }

  const auto f = [&](const ParamVector& w) { return loss(spec, w, ds, all_indices(ds)); };
  CHECK(max_rel_err(g, finite_diff_grad(f, zero, 1e-5)) < 1e-6);
}

TEST_CASE("gradient matches finite differences on random probes") {
  RngStream rng(2024);
  for (ModelKind kind : {ModelKind::squared_svm, ModelKind::multinomial_logistic}) {
    const std::int32_t classes = kind == ModelKind::squared_svm ? 2 : 5;
    const ModelSpec spec{kind, 4, classes, 0.01};
    const Dataset ds = gen_synthetic(64, 4, classes, 2.0, rng.next_u64());
    for (int probe = 0; probe < 25; ++probe) {
      ParamVector w(spec.param_dim());
      for (auto& x : w) x = 0.4 * rng.next_gaussian();
      const ParamVector g = grad(spec, w, ds, all_indices(ds));
      const auto f = [&](const ParamVector& p) { return loss(spec, p, ds, all_indices(ds)); };
      CHECK(max_rel_err(g, finite_diff_grad(f, w, 1e-6)) < 1e-5);
    }
  }
}

TEST_CASE("full_grad equals the mean of per-sample gradients") {
  const ModelSpec spec{ModelKind::squared_svm, 6, 2, 0.0};
  const Dataset ds = gen_synthetic(64, 6, 2, 3.0, 99);
  RngStream rng(1);
  ParamVector w(spec.param_dim());
  for (auto& x : w) x = 0.3 * rng.next_gaussian();

  const ParamVector g = full_grad(spec, w, ds, all_indices(ds));
  ParamVector mean(spec.param_dim(), 0.0);
  for (std::uint32_t i = 0; i < ds.size(); ++i) {
    const ParamVector gi = grad(spec, w, ds, std::vector<std::uint32_t>{i});
    axpy_inplace(1.0 / static_cast<double>(ds.size()), gi, mean);
  }
  for (std::size_t j = 0; j < g.size(); ++j) {
    CHECK(g[j] == doctest::Approx(mean[j]).epsilon(1e-12));
  }

  // Single-sample shard reduces to grad; duplicated shard leaves the mean.
  const std::vector<std::uint32_t> one{3};
  CHECK(full_grad(spec, w, ds, one) == grad(spec, w, ds, one));
  std::vector<std::uint32_t> twice = all_indices(ds);
  twice.insert(twice.end(), twice.begin(), twice.end());
  const ParamVector doubled = full_grad(spec, w, ds, twice);
  for (std::size_t j = 0; j < g.size(); ++j) {
    CHECK(doubled[j] == doctest::Approx(g[j]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(full_grad(spec, w, ds, std::vector<std::uint32_t>{}), ContractError);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  RngStream rng(555);
  for (ModelKind kind : {ModelKind::squared_svm, ModelKind::multinomial_logistic}) {
    const std::int32_t classes = kind == ModelKind::squared_svm ? 2 : 7;
    const ModelSpec spec{kind, 9, classes, 0.001};
    const Dataset ds = gen_synthetic(3000, 9, classes, 3.0, rng.next_u64());
    ParamVector w(spec.param_dim());
    for (auto& x : w) x = 0.2 * rng.next_gaussian();

    const auto idx = all_indices(ds);
    CHECK(std::fabs(loss(spec, w, ds, idx) - reference::loss(spec, w, ds, idx)) < 1e-12);
    const ParamVector gp = grad(spec, w, ds, idx);
    const ParamVector gr = reference::grad(spec, w, ds, idx);
    for (std::size_t j = 0; j < gp.size(); ++j) {
      CHECK(gp[j] == doctest::Approx(gr[j]).epsilon(1e-11));
    }
  }
}

TEST_CASE("full-batch descent on a convex objective never increases the loss") {
  const ModelSpec spec{ModelKind::squared_svm, 5, 2, 0.0};
  const Dataset ds = gen_synthetic(200, 5, 2, 3.0, 4242);
  const auto idx = all_indices(ds);
  ParamVector w(spec.param_dim(), 0.0);
  double prev = loss(spec, w, ds, idx);
  CHECK(prev >= 0.0);
  for (int step = 0; step < 100; ++step) {
    w = axpy(-0.01, full_grad(spec, w, ds, idx), w);
    const double current = loss(spec, w, ds, idx);
    CHECK(current >= 0.0);
    CHECK(current <= prev + 1e-12);
    prev = current;
  }
}

TEST_CASE("l2 regularization contributes to loss and gradient") {
  const ModelSpec spec{ModelKind::squared_svm, 2, 2, 0.5};
  const Dataset ds = make_dataset({{3.0, 0.0}}, {1}, 2);
  const ParamVector w{1.0, 2.0, 0.0};  // satisfied margin, only reg remains
  CHECK(loss(spec, w, ds, all_indices(ds)) == doctest::Approx(0.25 * 5.0));
  const ParamVector g = grad(spec, w, ds, all_indices(ds));
  CHECK(g[0] == doctest::Approx(0.5));
  CHECK(g[1] == doctest::Approx(1.0));
}

TEST_CASE("model spec validation") {
  CHECK_THROWS_AS((ModelSpec{ModelKind::squared_svm, 4, 3, 0.0}).validate(), ContractError);
  CHECK_THROWS_AS((ModelSpec{ModelKind::squared_svm, 0, 2, 0.0}).validate(), ContractError);
  CHECK_THROWS_AS((ModelSpec{ModelKind::squared_svm, 4, 2, -1.0}).validate(), ContractError);
  CHECK((ModelSpec{ModelKind::squared_svm, 4, 2, 0.0}).param_dim() == 5);
  CHECK((ModelSpec{ModelKind::multinomial_logistic, 4, 10, 0.0}).param_dim() == 50);
}
