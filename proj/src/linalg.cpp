#include "opinet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "opinet/error.hpp"
#include "opinet/kernels.hpp"

namespace opinet {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  kernels::gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor c({a.rows(), b.rows()});
  kernels::gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: incompatible shapes " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  Tensor c({a.cols(), b.cols()});
  kernels::gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), b.data(), c.data());
  return c;
}

namespace {

double off_diagonal_norm(const Tensor& a) {
  const std::size_t n = a.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

void rotate(Tensor& a, Tensor& v, std::size_t p, std::size_t q) {
  const std::size_t n = a.rows();
  const double apq = a(p, q);
  const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;
  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p), akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = a(p, k), aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p), vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

SymEig sym_eig(const Tensor& input) {
  if (input.rank() != 2 || input.rows() != input.cols()) {
    throw DimensionError("sym_eig: expected a square matrix, got " + shape_string(input.shape()));
  }
  const std::size_t n = input.rows();
  const double tol = 1e-10 * std::max(1.0, max_abs(input));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > tol) {
        throw ContractError("sym_eig: input is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) +
                            ")");
      }
  require_finite(input, "sym_eig input");

  Tensor a = input;
  // Work on the exactly symmetrised matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (input(i, j) + input(j, i));
  Tensor v = Tensor::identity(n);

  const double norm = frobenius_norm(a);
  SymEig result;
  constexpr int kMaxSweeps = 100;
  if (norm > 0.0) {
    while (off_diagonal_norm(a) >= 1e-12 * norm) {
      if (result.sweeps == kMaxSweeps) throw NumericError("sym_eig: Jacobi sweeps did not converge");
      for (std::size_t p = 0; p + 1 < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q)
          if (a(p, q) != 0.0) rotate(a, v, p, q);
      ++result.sweeps;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  result.eigenvalues = Tensor({n});
  result.eigenvectors = Tensor({n, n});
  for (std::size_t c = 0; c < n; ++c) {
    result.eigenvalues[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) result.eigenvectors(r, c) = v(r, order[c]);
  }
  return result;
}

Tensor eig_reconstruct(const SymEig& eig) {
  const std::size_t n = eig.eigenvalues.size();
  Tensor scaled = eig.eigenvectors;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) scaled(r, c) *= eig.eigenvalues[c];
  return matmul_nt(scaled, eig.eigenvectors);
}

}  // namespace opinet
