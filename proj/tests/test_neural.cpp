#include <doctest.h>

#include <cmath>

#include "opinet/checkpoint.hpp"
#include "opinet/error.hpp"
#include "opinet/neural.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/forward_mode.hpp"

using namespace opinet;

namespace {

std::vector<LayerSpec> two_layer(std::size_t in, std::size_t hidden, std::size_t out) {
  return {LayerSpec::linear(in, hidden), LayerSpec::relu(hidden), LayerSpec::linear(hidden, out)};
}

// Small nets exercising each layer kind.
std::vector<std::vector<LayerSpec>> kind_nets() {
  return {
      two_layer(3, 6, 2),
      {LayerSpec::linear(3, 8), LayerSpec::relu(8), LayerSpec::residual(8), LayerSpec::relu(8), LayerSpec::linear(8, 2)},
      {LayerSpec::linear(3, 8), LayerSpec::relu(8), LayerSpec::se(8, 2), LayerSpec::linear(8, 2)},
      {LayerSpec::linear(3, 8), LayerSpec::layer_norm(8), LayerSpec::relu(8), LayerSpec::linear(8, 2)},
  };
}

// Objective <w, net(x)> used for every finite-difference check.
double objective(const Mlp& net, const Tensor& x, const Tensor& w) {
  const Tensor y = net.forward(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * w[i];
  return acc;
}

struct CheckStats {
  std::size_t checked = 0;
  std::size_t failed = 0;
};

CheckStats fd_check(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  Rng rng(seed);
  Mlp net(specs, rng);
  // Nonzero biases so residual/SE paths are exercised away from symmetric points.
  for (const auto& slot : net.params().layout())
    if (slot.shape.size() == 1)
      for (auto& b : net.params().view(slot)) b = 0.1 * rng.normal();
  const Tensor x = rand_normal(rng, {3, specs.front().in_dim}, 0.0, 1.0);
  const Tensor w = rand_normal(rng, {3, specs.back().out_dim}, 0.0, 1.0);
  const Gradients g = net.backward(x, w);
  CheckStats stats;
  const double h = 1e-5;
  for (std::size_t q = 0; q < net.param_count(); ++q) {
    auto f = [&](const std::vector<double>& p) {
      Mlp m(specs, ParamVector(net.params().layout(), p));
      return objective(m, x, w);
    };
    const double fd = oracle::central_difference(f, net.params().storage(), q, h);
    ++stats.checked;
    if (!oracle::gradient_close(g.params.storage()[q], fd)) ++stats.failed;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto f = [&](const std::vector<double>& xv) { return objective(net, Tensor(x.shape(), xv), w); };
    const double fd = oracle::central_difference(f, x.storage(), i, h);
    ++stats.checked;
    if (!oracle::gradient_close(g.input[i], fd)) ++stats.failed;
  }
  return stats;
}

}  // namespace

TEST_CASE("zero-weight linear layer emits its bias") {
  const std::vector<LayerSpec> specs{LayerSpec::linear(3, 2)};
  ParamVector p(ParamVector::layout_for(specs));
  p.view("l0.bias")[0] = 1.0;
  p.view("l0.bias")[1] = 2.0;
  Mlp net(specs, p);
  const Tensor y = net.forward(Tensor::matrix({{4, -5, 6}, {0.1, 0.2, 0.3}}));
  CHECK(y == Tensor::matrix({{1, 2}, {1, 2}}));
}

TEST_CASE("relu layer definition") {
  Mlp net({LayerSpec::relu(3)}, ParamVector(std::vector<ParamSlot>{}));
  CHECK(net.forward(Tensor::matrix({{-1, 0, 2}})) == Tensor::matrix({{0, 0, 2}}));
}

TEST_CASE("residual block with zero inner weights is the identity") {
  const std::vector<LayerSpec> specs{LayerSpec::residual(4)};
  Mlp net(specs, ParamVector(ParamVector::layout_for(specs)));
  const Tensor x = Tensor::matrix({{1, -2, 3, 0.5}});
  CHECK(net.forward(x) == x);
}

TEST_CASE("single-weight linear model: param grad is x times out_grad") {
  const std::vector<LayerSpec> specs{LayerSpec::linear(1, 1, false)};
  Mlp net(specs, ParamVector(ParamVector::layout_for(specs), {0.7}));
  const Gradients g = net.backward(Tensor::matrix({{3.0}}), Tensor::matrix({{2.0}}));
  CHECK(g.params.storage()[0] == 6.0);
  CHECK(g.input[0] == doctest::Approx(1.4));
}

TEST_CASE("zero output gradient gives zero gradients") {
  for (const auto& specs : kind_nets()) {
    Rng rng(1);
    Mlp net(specs, rng);
    const Tensor x = rand_normal(rng, {4, specs.front().in_dim}, 0.0, 1.0);
    const Gradients g = net.backward(x, Tensor({4, specs.back().out_dim}));
    for (double v : g.params.values()) CHECK(v == 0.0);
    CHECK(max_abs(g.input) == 0.0);
  }
}

TEST_CASE("two-layer MLP seed 7 matches central differences") {
  const CheckStats s = fd_check(two_layer(4, 5, 3), 7);
  CHECK(s.checked > 0);
  CHECK(s.failed == 0);
}

TEST_CASE("property: every layer kind passes the gradient check over 10 seeds") {
  const auto nets = kind_nets();
  for (std::size_t k = 0; k < nets.size(); ++k) {
    CAPTURE(k);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CAPTURE(seed);
      const CheckStats s = fd_check(nets[k], 1000 + seed);
      CHECK(s.failed == 0);
    }
  }
}

TEST_CASE("reverse mode equals the forward-mode oracle") {
  for (const auto& specs : kind_nets()) {
    Rng rng(21);
    Mlp net(specs, rng);
    std::vector<double> x(specs.front().in_dim);
    for (auto& v : x) v = rng.normal();
    const auto pj = oracle::param_jacobian(net, x);
    const auto ij = oracle::input_jacobian(net, x);
    for (std::size_t o = 0; o < net.out_dim(); ++o) {
      Tensor og({1, net.out_dim()});
      og[o] = 1.0;
      const Gradients g = net.backward(Tensor({1, x.size()}, x), og);
      for (std::size_t q = 0; q < net.param_count(); ++q) CHECK(g.params.storage()[q] == doctest::Approx(pj[o][q]).epsilon(1e-12));
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.input[i] == doctest::Approx(ij[o][i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("dimension errors") {
  Rng rng(2);
  Mlp net(two_layer(3, 4, 2), rng);
  CHECK_THROWS_AS(net.forward(Tensor({2, 4})), DimensionError);
  CHECK_THROWS_AS(net.backward(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("invalid chains are rejected") {
  Rng rng(0);
  CHECK_THROWS_AS(init_params(std::vector<LayerSpec>{LayerSpec::linear(3, 4), LayerSpec::linear(5, 2)}, rng),
                  ParameterError);
  CHECK_THROWS_AS(init_params(std::vector<LayerSpec>{LayerSpec::se(6, 4)}, rng), ParameterError);
  LayerSpec bad = LayerSpec::residual(4);
  bad.out_dim = 5;
  CHECK_THROWS_AS(init_params(std::vector<LayerSpec>{bad}, rng), ParameterError);
}

TEST_CASE("init_params is deterministic with zero biases and He scale") {
  const auto specs = two_layer(256, 400, 2);
  Rng a(5), b(5);
  const ParamVector pa = init_params(specs, a), pb = init_params(specs, b);
  CHECK(pa == pb);
  for (double v : pa.view("l0.bias")) CHECK(v == 0.0);
  for (double v : pa.view("l2.bias")) CHECK(v == 0.0);
  const auto w = pa.view("l0.weight");  // 400 * 256 = 102400 draws, fan-in 256
  double ss = 0.0;
  for (double v : w) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(w.size()));
  CHECK(std::abs(sd - std::sqrt(2.0 / 256.0)) < 0.1 * std::sqrt(2.0 / 256.0));
}

TEST_CASE("property: bias-free ReLU stacks are positively homogeneous") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::vector<LayerSpec> specs{LayerSpec::linear(4, 9, false), LayerSpec::relu(9),
                                       LayerSpec::linear(9, 7, false), LayerSpec::relu(7),
                                       LayerSpec::linear(7, 3, false)};
    Mlp net(specs, rng);
    const Tensor x = rand_normal(rng, {5, 4}, 0.0, 1.0);
    const double c = 0.5 + 3.0 * rng.uniform();
    const Tensor lhs = net.forward(scale(x, c));
    const Tensor rhs = scale(net.forward(x), c);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-12 * std::max(1.0, max_abs(rhs)));
  }
}

TEST_CASE("property: checkpoint save/load is bit-identical") {
  for (const auto& specs : kind_nets()) {
    Rng rng(33);
    Checkpoint ck;
    ck.seed = 33;
    ck.networks.push_back({"net", Mlp(specs, rng)});
    const std::string bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.seed == 33);
    CHECK(back.network("net").params() == ck.networks[0].net.params());
    CHECK(back.network("net").specs() == specs);
    CHECK(encode_checkpoint(back) == bytes);
  }
}

TEST_CASE("corrupt checkpoints raise format errors") {
  Rng rng(1);
  Checkpoint ck;
  ck.networks.push_back({"net", Mlp(two_layer(2, 3, 1), rng)});
  std::string bytes = encode_checkpoint(ck);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
}
