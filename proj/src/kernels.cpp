#include "opinet/kernels.hpp"

#include <algorithm>
#include <vector>

#include "opinet/parallel.hpp"

namespace opinet::kernels {

namespace {

// Row i of C = A * B. Zero multipliers are skipped (ReLU activations are
// sparse); that leaves finite results unchanged.
inline void nn_row(std::size_t i, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                   bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  const double* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double s = arow[p];
    if (s == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
  }
}

inline void tn_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                   double* c, bool accumulate) {
  double* crow = c + i * n;
  if (!accumulate) std::fill(crow, crow + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double s = a[p * m + i];
    if (s == 0.0) continue;
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
  }
}

// Four interleaved partial sums, combined in a fixed order.
inline double blocked_dot(const double* x, const double* y, std::size_t p) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t q = 0;
  for (; q + 4 <= p; q += 4) {
    s0 += x[q] * y[q];
    s1 += x[q + 1] * y[q + 1];
    s2 += x[q + 2] * y[q + 2];
    s3 += x[q + 3] * y[q + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; q < p; ++q) s += x[q] * y[q];
  return s;
}

inline void gram_row(std::size_t r, std::size_t n, std::size_t p, const double* j, double* g) {
  const double* jr = j + r * p;
  for (std::size_t c = r; c < n; ++c) g[r * n + c] = blocked_dot(jr, j + c * p, p);
}

void mirror_upper(std::size_t n, double* g) {
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < r; ++c) g[r * n + c] = g[c * n + r];
}

std::vector<double> transposed(std::size_t rows, std::size_t cols, const double* src) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) nn_row(i, n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto bt = transposed(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) tn_row(i, m, n, k, a, b, c, accumulate);
}

void gram(std::size_t n, std::size_t p, const double* j, double* g) {
  for (std::size_t r = 0; r < n; ++r) gram_row(r, n, p, j, g);
  mirror_upper(n, g);
}

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (long long i = 0; i < rows; ++i) nn_row(static_cast<std::size_t>(i), n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto bt = transposed(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (long long i = 0; i < rows; ++i) tn_row(static_cast<std::size_t>(i), m, n, k, a, b, c, accumulate);
}

void gram(std::size_t n, std::size_t p, const double* j, double* g) {
  const auto rows = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(num_threads())
  for (long long r = 0; r < rows; ++r) gram_row(static_cast<std::size_t>(r), n, p, j, g);
  mirror_upper(n, g);
}

}  // namespace omp

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (num_threads() > 1 && m > 1 && m * n * k >= kParallelWork)
    omp::gemm_nn(m, n, k, a, b, c, accumulate);
  else
    serial::gemm_nn(m, n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (num_threads() > 1 && m > 1 && m * n * k >= kParallelWork)
    omp::gemm_nt(m, n, k, a, b, c, accumulate);
  else
    serial::gemm_nt(m, n, k, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (num_threads() > 1 && m > 1 && m * n * k >= kParallelWork)
    omp::gemm_tn(m, n, k, a, b, c, accumulate);
  else
    serial::gemm_tn(m, n, k, a, b, c, accumulate);
}

void gram(std::size_t n, std::size_t p, const double* j, double* g) {
  if (num_threads() > 1 && n > 1 && n * n * p >= kParallelWork)
    omp::gram(n, p, j, g);
  else
    serial::gram(n, p, j, g);
}

}  // namespace opinet::kernels
