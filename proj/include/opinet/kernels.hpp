#pragma once

#include <cstddef>

namespace opinet::kernels {

// Raw row-major dense kernels. Every kernel comes in a serial reference
// form and an OpenMP form; both accumulate each output element in the same
// order, so their results are bitwise identical for any thread count.
//
//   gemm_nn:  C[m x n]  = A[m x k] * B[k x n]
//   gemm_nt:  C[m x n]  = A[m x k] * B[n x k]^T
//   gemm_tn:  C[m x n]  = A[k x m]^T * B[k x n]
//   gram:     G[n x n]  = J[n x p] * J[n x p]^T   (upper triangle, mirrored)
//
// When `accumulate` is true the product is added to C instead of replacing it.

namespace serial {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gram(std::size_t n, std::size_t p, const double* j, double* g);
}  // namespace serial

namespace omp {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gram(std::size_t n, std::size_t p, const double* j, double* g);
}  // namespace omp

// Dispatchers: OpenMP when more than one worker is configured and the problem
// is large enough to amortise a parallel region.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
void gram(std::size_t n, std::size_t p, const double* j, double* g);

}  // namespace opinet::kernels
