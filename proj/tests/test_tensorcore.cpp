#include <doctest.h>

#include <cmath>
#include <numeric>

#include "opinet/error.hpp"
#include "opinet/kernels.hpp"
#include "opinet/linalg.hpp"
#include "opinet/parallel.hpp"
#include "opinet/rng.hpp"
#include "opinet/tensor.hpp"

using namespace opinet;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

Tensor random_symmetric(Rng& rng, std::size_t n) {
  Tensor a = rand_normal(rng, {n, n}, 0.0, 1.0);
  Tensor s({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

}  // namespace

TEST_CASE("tensor construction rejects zero extents and mismatched data") {
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t(1, 2) == 1.5);
}

TEST_CASE("matmul identity, zero and hand-checked product") {
  Rng rng(3);
  const Tensor a = rand_normal(rng, {3, 3}, 0.0, 1.0);
  CHECK(matmul(Tensor::identity(3), a) == a);

  const Tensor p = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}}));
  CHECK(p == naive_matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}})));
  CHECK(p == Tensor::matrix({{2}, {4}}));

  const Tensor z = matmul(Tensor::zeros({2, 3}), rand_normal(rng, {3, 5}, 0.0, 1.0));
  CHECK(z.shape() == Shape{2, 5});
  CHECK(max_abs(z) == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    (void)matmul(Tensor({2, 3}), Tensor({4, 5}));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("matmul variants agree with the naive oracle") {
  Rng rng(5);
  const Tensor a = rand_normal(rng, {7, 4}, 0.0, 1.0);
  const Tensor b = rand_normal(rng, {4, 6}, 0.0, 1.0);
  CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-13);
  CHECK(max_abs_diff(matmul_nt(a, transpose(b)), naive_matmul(a, b)) < 1e-13);
  CHECK(max_abs_diff(matmul_tn(transpose(a), b), naive_matmul(a, b)) < 1e-13);
}

TEST_CASE("property: matmul is associative on random triples") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor a = rand_normal(rng, {3, 4}, 0.0, 1.0);
    const Tensor b = rand_normal(rng, {4, 5}, 0.0, 1.0);
    const Tensor c = rand_normal(rng, {5, 2}, 0.0, 1.0);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-10);
  }
}

TEST_CASE("serial and OpenMP kernels are bitwise identical") {
  Rng rng(9);
  const std::size_t m = 37, n = 29, k = 41;
  const Tensor a = rand_normal(rng, {m, k}, 0.0, 1.0);
  const Tensor b = rand_normal(rng, {k, n}, 0.0, 1.0);
  const Tensor bt = transpose(b);
  const Tensor at = transpose(a);
  const int saved = num_threads();
  set_num_threads(4);
  Tensor c1({m, n}), c2({m, n});
  kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c1.data());
  kernels::omp::gemm_nn(m, n, k, a.data(), b.data(), c2.data());
  CHECK(c1 == c2);
  kernels::serial::gemm_nt(m, n, k, a.data(), bt.data(), c1.data());
  kernels::omp::gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
  CHECK(c1 == c2);
  kernels::serial::gemm_tn(m, n, k, at.data(), b.data(), c1.data());
  kernels::omp::gemm_tn(m, n, k, at.data(), b.data(), c2.data());
  CHECK(c1 == c2);
  Tensor g1({m, m}), g2({m, m});
  kernels::serial::gram(m, k, a.data(), g1.data());
  kernels::omp::gram(m, k, a.data(), g2.data());
  CHECK(g1 == g2);
  set_num_threads(saved);
}

TEST_CASE("sym_eig on diagonal and analytic 2x2 inputs") {
  SymEig d = sym_eig(Tensor::matrix({{3, 0}, {0, 1}}));
  CHECK(d.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(d.eigenvalues[1] == doctest::Approx(1.0));

  SymEig e = sym_eig(Tensor::matrix({{2, 1}, {1, 2}}));
  CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("sym_eig rejects asymmetric input") {
  CHECK_THROWS_AS(sym_eig(Tensor::matrix({{1, 2}, {0, 1}})), ContractError);
}

TEST_CASE("property: sym_eig reconstructs, is orthonormal and preserves the trace") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + seed % 9;
    const Tensor a = random_symmetric(rng, n);
    const SymEig e = sym_eig(a);
    const double fro = frobenius_norm(a);
    CHECK(max_abs_diff(eig_reconstruct(e), a) < 1e-8 * std::max(1.0, fro));
    const Tensor vtv = matmul_tn(e.eigenvectors, e.eigenvectors);
    CHECK(max_abs_diff(vtv, Tensor::identity(n)) < 1e-8);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += a(i, i);
    CHECK(std::abs(trace - sum(e.eigenvalues)) < 1e-9);
    for (std::size_t i = 1; i < n; ++i) CHECK(e.eigenvalues[i - 1] >= e.eigenvalues[i]);
    // A v_i = lambda_i v_i
    const Tensor av = matmul(a, e.eigenvectors);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < n; ++r)
        CHECK(std::abs(av(r, i) - e.eigenvalues[i] * e.eigenvectors(r, i)) < 1e-8 * std::max(1.0, fro));
  }
}

TEST_CASE("sym_eig reconstructs a random symmetric 6x6") {
  Rng rng(6);
  const Tensor a = random_symmetric(rng, 6);
  CHECK(max_abs_diff(eig_reconstruct(sym_eig(a)), a) < 1e-8);
}

TEST_CASE("property: PSD inputs have eigenvalues above -1e-10") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const Tensor b = rand_normal(rng, {8, 3}, 0.0, 1.0);  // rank 3, so five zero eigenvalues
    const SymEig e = sym_eig(matmul_nt(b, b));
    for (double v : e.eigenvalues.values()) CHECK(v >= -1e-10);
  }
}

TEST_CASE("rand_normal degenerate std, determinism and negative std") {
  Rng r1(42), r2(42);
  const Tensor c = rand_normal(r1, {5}, 2.5, 0.0);
  for (double v : c.values()) CHECK(v == 2.5);
  Rng a(42), b(42);
  CHECK(rand_normal(a, {64}, 0.0, 1.0) == rand_normal(b, {64}, 0.0, 1.0));
  CHECK_THROWS_AS(rand_normal(r2, {3}, 0.0, -1.0), ParameterError);
}

TEST_CASE("rand_normal sample moments") {
  Rng rng(2024);
  const Tensor x = rand_normal(rng, {100000}, 0.0, 1.0);
  const double n = static_cast<double>(x.size());
  const double mean = sum(x) / n;
  double var = 0.0;
  for (double v : x.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sd - 1.0) < 0.02);
}

TEST_CASE("property: a resumed generator continues the uninterrupted sequence") {
  for (std::uint64_t seed : {0ull, 1ull, 77ull, 0xdeadbeefull}) {
    Rng full(seed);
    for (int i = 0; i < 37; ++i) (void)full.normal();
    Rng resumed = Rng::from_state(full.state());
    for (int i = 0; i < 100; ++i) CHECK(full.next_u64() == resumed.next_u64());
  }
}

TEST_CASE("rng streams differ and below() stays in range") {
  Rng a(7, 1), b(7, 2);
  CHECK(a.next_u64() != b.next_u64());
  Rng r(11);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(13) < 13);
  // uniform() is on [0, 1)
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("require_finite names the offending tensor") {
  Tensor t({2}, {1.0, std::nan("")});
  try {
    require_finite(t, "weights");
    FAIL("expected numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("weights") != std::string::npos);
  }
}
