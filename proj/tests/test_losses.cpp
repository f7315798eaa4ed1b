#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "opinet/error.hpp"
#include "opinet/losses.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/models.hpp"

using namespace opinet;

namespace {

ReceiverSet interior_receivers(Rng& rng, std::size_t n) {
  Tensor pts({n, 2});
  for (auto& v : pts.values()) v = rng.uniform(0.2, 0.8);
  return ReceiverSet(pts);
}

FieldFn zero_field() {
  return [](const Tensor& p) { return Tensor({p.rows()}); };
}

SourceSpec src(double x, double y, double re, double im = 0.0) { return {{x, y}, {re, im}}; }

Tensor random_image(Rng& rng, Shape shape) { return rand_uniform(rng, std::move(shape), 0.0, 1.0); }

}  // namespace

TEST_CASE("data_loss examples") {
  Rng rng(1);
  const Tensor a = rand_normal(rng, {10}, 0.0, 1.0);
  CHECK(data_loss(a, a) == 0.0);
  Tensor b = a;
  for (auto& v : b.values()) v -= 1.0;
  CHECK(data_loss(a, b) == doctest::Approx(1.0).epsilon(1e-14));
  const Tensor p = rand_normal(rng, {5}, 0.0, 1.0), o = rand_normal(rng, {5}, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < 5; ++i) acc += (p[i] - o[i]) * (p[i] - o[i]);
  CHECK(data_loss(p, o) == doctest::Approx(acc / 5.0).epsilon(1e-14));
  CHECK_THROWS_AS(data_loss(Tensor({3}), Tensor({4})), DimensionError);
}

TEST_CASE("physics residual of sin(k x1) with zero forcing") {
  Rng rng(2);
  const ReceiverSet r = interior_receivers(rng, 32);
  PhysicsConfig cfg;
  cfg.wavenumber = 1.0;
  cfg.fd_step = 1e-3;
  const FieldFn u = [](const Tensor& p) {
    Tensor out({p.rows()});
    for (std::size_t i = 0; i < p.rows(); ++i) out[i] = std::sin(p(i, 0));
    return out;
  };
  CHECK(physics_loss(u, zero_field(), r, cfg) <= 1e-5);
}

TEST_CASE("physics residual of the zero field is zero") {
  Rng rng(3);
  CHECK(physics_loss(zero_field(), zero_field(), interior_receivers(rng, 8), PhysicsConfig{}) == 0.0);
}

TEST_CASE("physics residual of x1^2 at k = 0 is 2 per point") {
  Rng rng(4);
  const ReceiverSet r = interior_receivers(rng, 16);
  PhysicsConfig cfg;
  cfg.wavenumber = 0.0;
  const FieldFn u = [](const Tensor& p) {
    Tensor out({p.rows()});
    for (std::size_t i = 0; i < p.rows(); ++i) out[i] = p(i, 0) * p(i, 0);
    return out;
  };
  const Tensor res = physics_residuals(u, zero_field(), r, cfg);
  for (double v : res.values()) CHECK(std::abs(v * v - 4.0) <= 1e-6);
  CHECK(std::abs(physics_loss(u, zero_field(), r, cfg) - 4.0) <= 1e-6);
}

TEST_CASE("property: FD Laplacian converges at second order") {
  const FieldFn u = [](const Tensor& p) {
    Tensor out({p.rows()});
    for (std::size_t i = 0; i < p.rows(); ++i) out[i] = std::sin(p(i, 0)) * std::sin(p(i, 1));
    return out;
  };
  Rng rng(5);
  const ReceiverSet r = interior_receivers(rng, 10);
  for (double h : {0.1, 0.05, 0.02}) {
    const Tensor coarse = fd_laplacian(u, r, h), fine = fd_laplacian(u, r, h / 2);
    for (std::size_t t = 0; t < r.size(); ++t) {
      const double exact = -2.0 * std::sin(r.points()(t, 0)) * std::sin(r.points()(t, 1));
      const double ratio = std::abs(coarse[t] - exact) / std::abs(fine[t] - exact);
      CHECK(ratio >= 3.5);
    }
  }
}

TEST_CASE("receivers near the boundary are listed in the error") {
  PhysicsConfig cfg;
  cfg.fd_step = 0.01;
  const ReceiverSet r(Tensor::matrix({{0.5, 0.5}, {0.015, 0.5}, {0.4, 0.99}}));
  try {
    (void)physics_loss(zero_field(), zero_field(), r, cfg);
    FAIL("expected a contract error");
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("#1") != std::string::npos);
    CHECK(msg.find("#2") != std::string::npos);
    CHECK(msg.find("#0") == std::string::npos);
  }
}

TEST_CASE("mollified forcing integrates to the strength") {
  const double w = 2.0 / 31.0;
  const std::size_t n = 301;
  Tensor pts({n * n, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      pts(i * n + j, 0) = static_cast<double>(i) / (n - 1);
      pts(i * n + j, 1) = static_cast<double>(j) / (n - 1);
    }
  const Tensor f = mollified_forcing({src(0.45, 0.55, 1.3)}, pts, w);
  const double cell = 1.0 / ((n - 1) * (n - 1));
  CHECK(std::abs(sum(f) * cell - 1.3) <= 0.01 * 1.3);
  const Tensor z = mollified_forcing({src(0.45, 0.55, 0.0)}, pts, w);
  CHECK(max_abs(z) == 0.0);
}

TEST_CASE("physics loss gradients match finite differences") {
  Rng rng(6);
  DeepONetModel m(oracle::small_config(), rng);
  const ReceiverSet r = interior_receivers(rng, 6);
  PhysicsConfig cfg;
  cfg.fd_step = 0.02;  // keeps cancellation error of the model FD stencil small
  cfg.wavenumber = 2.0;
  const std::vector<SourceSpec> s{src(0.4, 0.6, 1.1, 0.2), src(0.7, 0.3, 0.8, -0.1)};
  const PhysicsGradients g = physics_loss_backward(m, s, r, cfg);
  CHECK(g.loss == doctest::Approx(physics_loss(m, s, r, cfg)).epsilon(1e-13));

  // parameters along a random direction
  const ParamVector base = m.parameters();
  const ParamVector flat = m.flatten(&g.branch, &g.trunk, nullptr, nullptr);
  std::vector<double> dir(m.field_param_count());
  for (auto& v : dir) v = rng.normal();
  const double h = 1e-6;
  auto at = [&](double sign) {
    DeepONetModel c = m;
    ParamVector p = base;
    for (std::size_t q = 0; q < dir.size(); ++q) p.storage()[q] += sign * h * dir[q];
    c.assign_parameters(p);
    return physics_loss(c, s, r, cfg);
  };
  double analytic = 0.0;
  for (std::size_t q = 0; q < dir.size(); ++q) analytic += flat.storage()[q] * dir[q];
  CHECK(analytic == doctest::Approx((at(1) - at(-1)) / (2 * h)).epsilon(1e-5));

  // every source coordinate
  for (std::size_t j = 0; j < s.size(); ++j)
    for (int k = 0; k < 4; ++k) {
      auto f = [&](const std::vector<double>& v) {
        auto t = s;
        t[j].location = {v[0], v[1]};
        t[j].strength = {v[2], v[3]};
        return physics_loss(m, t, r, cfg);
      };
      const std::vector<double> x{s[j].location[0], s[j].location[1], s[j].strength[0], s[j].strength[1]};
      const double fd = oracle::central_difference(f, x, static_cast<std::size_t>(k), 1e-6);
      CHECK(oracle::gradient_close(g.source_grad(j, static_cast<std::size_t>(k)), fd, 1e-5, 1e-6));
    }
}

TEST_CASE("source loss examples") {
  const std::vector<SourceSpec> a{src(0.2, 0.3, 1.0), src(0.7, 0.8, 0.5)};
  CHECK(source_loss(a, a) == 0.0);
  CHECK(source_loss({src(0.5, 0.6, 1.0)}, {src(0.2, 0.2, 1.0)}) == doctest::Approx(0.25).epsilon(1e-14));
  const std::vector<SourceSpec> pred{src(0.25, 0.3, 0.9), src(0.6, 0.85, 0.4)};
  const std::vector<SourceSpec> swapped{pred[1], pred[0]};
  CHECK(source_loss(swapped, a) == source_loss(pred, a));
  CHECK_THROWS_AS(source_loss(a, {a[0]}), DimensionError);
}

TEST_CASE("property: Hungarian matching equals brute-force permutation search") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + seed % 6;
    const Tensor cost = rand_uniform(rng, {n, n}, 0.0, 1.0);
    const auto assign = hungarian(cost);
    double got = 0.0;
    for (std::size_t i = 0; i < n; ++i) got += cost(i, assign[i]);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += cost(i, perm[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
    auto sorted = assign;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
  }
}

TEST_CASE("source loss gradient matches finite differences") {
  Rng rng(7);
  const auto truth = oracle::random_sources(rng, 3);
  auto pred = oracle::random_sources(rng, 3);
  const SourceLossResult res = source_loss_detail(pred, truth);
  for (std::size_t j = 0; j < 3; ++j)
    for (int k = 0; k < 4; ++k) {
      auto f = [&](const std::vector<double>& v) {
        auto p = pred;
        p[j].location = {v[0], v[1]};
        p[j].strength = {v[2], v[3]};
        return source_loss(p, truth);
      };
      const std::vector<double> x{pred[j].location[0], pred[j].location[1], pred[j].strength[0], pred[j].strength[1]};
      CHECK(oracle::gradient_close(res.pred_grad(j, static_cast<std::size_t>(k)),
                                   oracle::central_difference(f, x, static_cast<std::size_t>(k), 1e-6)));
    }
}

TEST_CASE("perceptual loss identity, non-degeneracy and determinism") {
  const FeatureExtractor fx;
  Rng rng(8);
  const Tensor img = random_image(rng, {1, 28, 28});
  CHECK(perceptual_loss(img, img, fx) == 0.0);
  CHECK(perceptual_loss(Tensor({1, 16, 16}, 0.0), Tensor({1, 16, 16}, 1.0), fx) > 0.0);
  const FeatureExtractor again;
  for (std::size_t l = 0; l < 3; ++l) CHECK(fx.weights(l) == again.weights(l));
  CHECK(fx.output_shape(28, 28) == Shape{64, 4, 4});
  CHECK(fx.output_shape(32, 32) == Shape{64, 4, 4});
  CHECK_THROWS_AS(perceptual_loss(Tensor({1, 8, 8}), Tensor({1, 8, 9}), fx), DimensionError);
}

TEST_CASE("perceptual loss gradient matches central differences on 8x8 images") {
  for (std::size_t channels : {1u, 3u}) {
    const FeatureExtractor fx(channels);
    Rng rng(9 + channels);
    const Tensor pred = random_image(rng, {channels, 8, 8});
    const Tensor obs = random_image(rng, {channels, 8, 8});
    const Tensor g = perceptual_loss_gradient(pred, obs, fx);
    std::size_t failures = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      auto f = [&](const std::vector<double>& v) { return perceptual_loss(Tensor(pred.shape(), v), obs, fx); };
      const double fd = oracle::central_difference(f, pred.storage(), i, 1e-4);
      if (!oracle::gradient_close(g[i], fd, 1e-4, 1e-7)) ++failures;
    }
    CHECK(failures == 0);
  }
}

TEST_CASE("batched perceptual loss is the mean over images") {
  const FeatureExtractor fx;
  Rng rng(10);
  const Tensor a = random_image(rng, {2, 1, 12, 12}), b = random_image(rng, {2, 1, 12, 12});
  auto slice = [](const Tensor& t, std::size_t i) {
    return Tensor({1, 12, 12}, std::vector<double>(t.storage().begin() + i * 144, t.storage().begin() + (i + 1) * 144));
  };
  const double mean = 0.5 * (perceptual_loss(slice(a, 0), slice(b, 0), fx) + perceptual_loss(slice(a, 1), slice(b, 1), fx));
  CHECK(perceptual_loss(a, b, fx) == doctest::Approx(mean).epsilon(1e-13));
}

TEST_CASE("total loss with published weights") {
  const LossWeights w;
  CHECK(w.alpha == 1.0);
  CHECK(w.beta == 0.5);
  CHECK(w.gamma == 0.2);
  CHECK(w.delta == 0.3);
  CHECK(total_loss({1.0, 1.0, 1.0, 1.0, std::nullopt}, w).total == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(total_loss({0.0, 0.0, 0.0, 0.0, std::nullopt}, w).total == 0.0);
  const LossWeights only_data{1.0, 0.0, 0.0, 0.0, 0.0};
  CHECK(total_loss({0.37, 2.0, 3.0, 4.0, std::nullopt}, only_data).total == 0.37);
}

TEST_CASE("property: total loss is linear in each component") {
  Rng rng(11);
  const LossWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    LossComponents c{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), std::nullopt};
    const double base = total_loss(c, w).total;
    LossComponents bumped = c;
    *bumped.physics += 1.0;
    CHECK(total_loss(bumped, w).total - base == doctest::Approx(w.beta).epsilon(1e-12));
  }
}

TEST_CASE("disabled components contribute nothing and are reported") {
  const LossReport r = total_loss({0.5, std::nullopt, std::nullopt, 0.25, std::nullopt}, LossWeights{});
  CHECK(r.total == doctest::Approx(0.5 + 0.3 * 0.25));
  std::ostringstream out;
  write_loss_header(out);
  write_loss_row(out, 3, r);
  CHECK(out.str() == "step,L_data,L_phys,L_source,L_perceptual,L_ntk,total\n3,0.5,disabled,disabled,0.25,disabled,0.57499999999999996\n");
}

TEST_CASE("non-finite components are rejected by name") {
  try {
    (void)total_loss({1.0, std::nan(""), 0.0, 0.0, std::nullopt}, LossWeights{});
    FAIL("expected numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("physics") != std::string::npos);
  }
}

TEST_CASE("property: losses are non-negative") {
  const FeatureExtractor fx;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    CHECK(data_loss(rand_normal(rng, {7}, 0, 1), rand_normal(rng, {7}, 0, 1)) >= 0.0);
    CHECK(source_loss(oracle::random_sources(rng, 2), oracle::random_sources(rng, 2)) >= 0.0);
    CHECK(perceptual_loss(random_image(rng, {1, 9, 9}), random_image(rng, {1, 9, 9}), fx) >= 0.0);
  }
}
