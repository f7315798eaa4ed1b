#include <doctest.h>

#include <cmath>
#include <sstream>

#include "opinet/error.hpp"
#include "opinet/linalg.hpp"
#include "opinet/ntk.hpp"
#include "oracles/jacobian.hpp"
#include "oracles/models.hpp"

using namespace opinet;

namespace {

NtkGram with_spectrum(std::initializer_list<double> values) {
  NtkGram g;
  g.eigenvalues = Tensor::vector(values);
  g.theta = Tensor({g.eigenvalues.size(), g.eigenvalues.size()});
  return g;
}

NtkSchedule wide_clamps() {
  NtkSchedule s;
  s.lr_floor = 1e-12;
  s.lr_ceiling = 1e12;
  return s;
}

ProbeSet make_probe(Rng& rng, std::size_t n) { return {oracle::random_sources(rng, 1), oracle::random_receivers(rng, n), {}, {}}; }

}  // namespace

TEST_CASE("single-parameter model u = theta x: gram is x x'") {
  const NtkGram g = gram_from_jacobian(Tensor::matrix({{1.0}, {2.0}}));
  CHECK(g.theta == Tensor::matrix({{1, 2}, {2, 4}}));
  CHECK(g.eigenvalues[0] == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(std::abs(g.eigenvalues[1]) < 1e-14);
}

TEST_CASE("property: assemble_gram equals the explicit Jacobian product, symmetric and PSD") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    DeepONetConfig cfg = oracle::small_config();
    cfg.residual = seed % 2 == 1;
    cfg.se = seed % 3 == 2;
    DeepONetModel m(cfg, rng);
    REQUIRE(m.field_param_count() <= 2000);
    const ProbeSet probe = make_probe(rng, 10);
    const NtkGram g = assemble_gram(m, probe);
    const Tensor ref = oracle::naive_gram(oracle::field_jacobian(m, probe));
    CHECK(frobenius_norm(sub(g.theta, ref)) <= 1e-10 * frobenius_norm(ref));
    CHECK(max_abs_diff(g.theta, transpose(g.theta)) <= 1e-10);
    CHECK(g.eigenvalues[g.size() - 1] >= -1e-8);
  }
}

TEST_CASE("property: relabelling probe points permutes the gram exactly") {
  Rng rng(3);
  DeepONetModel m(oracle::small_config(), rng);
  const ProbeSet probe = make_probe(rng, 7);
  const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  Tensor pts({7, 2});
  for (std::size_t i = 0; i < 7; ++i) {
    pts(i, 0) = probe.receivers.points()(perm[i], 0);
    pts(i, 1) = probe.receivers.points()(perm[i], 1);
  }
  const NtkGram a = assemble_gram(m, probe);
  const NtkGram b = assemble_gram(m, {probe.sources, ReceiverSet(pts), {}, {}});
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t k = 0; k < 7; ++k) CHECK(b.theta(i, k) == a.theta(perm[i], perm[k]));
}

TEST_CASE("probe above the cap is a resource error") {
  Rng rng(4);
  DeepONetModel m(oracle::small_config(), rng);
  CHECK_THROWS_AS(assemble_gram(m, make_probe(rng, 9), 0, 8), ResourceError);
}

TEST_CASE("adapt_lr examples") {
  CHECK(adapt_lr(with_spectrum({4.0, 1.0}), wide_clamps()) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(adapt_lr(with_spectrum({2.5, 2.5}), wide_clamps()) == doctest::Approx(1.0 / 2.5).epsilon(1e-15));
  NtkSchedule tight = wide_clamps();
  tight.lr_ceiling = 0.01;
  CHECK(adapt_lr(with_spectrum({4.0, 1.0}), tight) == 0.01);
  NtkSchedule half = wide_clamps();
  half.safety = 0.5;
  CHECK(adapt_lr(with_spectrum({4.0, 1.0}), half) == doctest::Approx(0.2));
}

TEST_CASE("adapt_lr ignores eigenvalues below the cutoff and rejects degenerate kernels") {
  CHECK(adapt_lr(with_spectrum({3.0, 1e-12, 0.0}), wide_clamps()) == doctest::Approx(2.0 / 6.0));
  CHECK_THROWS_AS(adapt_lr(with_spectrum({0.0, 0.0}), wide_clamps()), DegenerateKernelError);
  CHECK_THROWS_AS(adapt_lr(with_spectrum({-1.0, -2.0}), wide_clamps()), DegenerateKernelError);
}

TEST_CASE("schedule validation") {
  NtkSchedule s;
  s.period = 0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = NtkSchedule{};
  s.lr_floor = 1.0;
  s.lr_ceiling = 0.5;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = NtkSchedule{};
  s.safety = 1.5;
  CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("drift penalty examples") {
  Rng rng(5);
  const Tensor j = rand_normal(rng, {4, 6}, 0.0, 1.0);
  const NtkGram ref = gram_from_jacobian(j, 0, 7);
  CHECK(ntk_drift_penalty(ref, ref) == 0.0);
  NtkGram twice = ref;
  twice.theta = scale(ref.theta, 2.0);
  CHECK(ntk_drift_penalty(twice, ref) == doctest::Approx(1.0).epsilon(1e-14));

  const NtkGram other = gram_from_jacobian(rand_normal(rng, {4, 6}, 0.0, 1.0), 5, 7);
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      num += (other.theta(a, b) - ref.theta(a, b)) * (other.theta(a, b) - ref.theta(a, b));
      den += ref.theta(a, b) * ref.theta(a, b);
    }
  CHECK(ntk_drift_penalty(other, ref) == doctest::Approx(num / den).epsilon(1e-13));

  NtkGram wrong = other;
  wrong.probe_id = 8;
  CHECK_THROWS_AS(ntk_drift_penalty(wrong, ref), ContractError);
}

TEST_CASE("linearized residual examples") {
  Rng rng(6);
  const NtkGram g = gram_from_jacobian(rand_normal(rng, {5, 8}, 0.0, 1.0));
  const Tensor r0 = rand_normal(rng, {5}, 0.0, 1.0);
  CHECK(predict_linearized_residuals(g, r0, 0.0, 10) == r0);

  const NtkGram id = gram_from_jacobian(Tensor::identity(3));
  const Tensor r1 = predict_linearized_residuals(id, Tensor::vector({1, -2, 3}), 1.0, 1);
  CHECK(max_abs(r1) == 0.0);

  const NtkGram diag = gram_from_jacobian(Tensor::matrix({{std::sqrt(2.0), 0}, {0, 1}}));
  const Tensor r3 = predict_linearized_residuals(diag, Tensor::vector({1.5, -0.5}), 0.1, 3);
  CHECK(r3[0] == doctest::Approx(std::pow(0.8, 3) * 1.5).epsilon(1e-14));
  CHECK(r3[1] == doctest::Approx(std::pow(0.9, 3) * -0.5).epsilon(1e-14));
}

TEST_CASE("property: repeated multiplication and spectral paths agree") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    const NtkGram g = gram_from_jacobian(rand_normal(rng, {6, 9}, 0.0, 1.0));
    const Tensor r0 = rand_normal(rng, {6}, 0.0, 1.0);
    const double lr = 1.0 / g.lambda_max();
    const Tensor a = predict_linearized_residuals(g, r0, lr, 40);
    const Tensor b = predict_linearized_residuals_spectral(g, r0, lr, 40);
    CHECK(max_abs_diff(a, b) <= 1e-8);
  }
}

TEST_CASE("drift gradient matches a finite difference of the drift penalty") {
  Rng rng(7);
  DeepONetConfig cfg = oracle::small_config();
  cfg.inverse_head = false;
  DeepONetModel m(cfg, rng);
  const ProbeSet probe = make_probe(rng, 6);
  const NtkGram ref = assemble_gram(m, probe);
  ParamVector p = m.parameters();
  for (auto& v : p.storage()) v += 0.05 * rng.normal();
  m.assign_parameters(p);

  const ParamVector grad = ntk_drift_gradient(m, probe, ref);
  std::vector<double> dir(p.size());
  for (auto& v : dir) v = rng.normal();
  const double h = 1e-5;
  auto penalty_at = [&](double sign) {
    DeepONetModel c = m;
    ParamVector q = p;
    for (std::size_t i = 0; i < q.size(); ++i) q.storage()[i] += sign * h * dir[i];
    c.assign_parameters(q);
    return ntk_drift_penalty(assemble_gram(c, probe), ref);
  };
  const double fd = (penalty_at(1.0) - penalty_at(-1.0)) / (2.0 * h);
  double analytic = 0.0;
  for (std::size_t i = 0; i < dir.size(); ++i) analytic += grad.storage()[i] * dir[i];
  CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("NTK report CSV layout") {
  std::ostringstream out;
  write_ntk_report_header(out);
  write_ntk_report_row(out, {100, 4.0, 1.0, 4.0, 0.01, 0.4});
  CHECK(out.str() == "step,lambda_max,lambda_min_pos,condition_number,drift_penalty,adapted_lr\n100,4,1,4,0.01,0.40000000000000002\n");
}
