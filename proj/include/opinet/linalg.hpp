#pragma once

#include "opinet/tensor.hpp"

namespace opinet {

/// Row-major matrix product; DimensionError names both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose in the caller.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);

struct SymEig {
  Tensor eigenvalues;   // [n], descending
  Tensor eigenvectors;  // [n x n], column i pairs with eigenvalues[i]
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps rotate every off-diagonal pair until the off-diagonal Frobenius
/// norm drops below 1e-12 * ||A||_F. Inputs must be symmetric within
/// 1e-10 * max(1, max|a_ij|); anything else is a ContractError.
SymEig sym_eig(const Tensor& a);

/// V * diag(values) * V^T, the inverse of sym_eig.
Tensor eig_reconstruct(const SymEig& eig);

}  // namespace opinet
