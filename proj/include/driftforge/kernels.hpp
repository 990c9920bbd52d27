// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "driftforge/common.hpp"

namespace driftforge::kernels {

// OpenMP-parallel dense kernels. Every output element is accumulated by
// exactly one thread in a fixed order, so results are bit-identical to
// the serial references below for any thread count.

// c[m,n] = a[m,k] @ b[k,n]
void gemm(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
// c[m,n] = a[m,k] @ b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
// c[m,n] = a[k,m]^T @ b[k,n]
void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);

// Batched variants over nb independent matrix triples.
void bmm(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n);
void bmm_nt(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n);
void bmm_tn(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n);

// Row-wise softmax over the last dimension, restricted to positions with
// keep[i] != 0; dropped positions get probability exactly 0. Rows with no
// kept position are an error upstream (never produced by the model).
// Numerically stabilized by max-subtraction.
void softmax_masked_rows(const double* x, const unsigned char* keep, double* y, i64 rows, i64 cols);

// Backward of masked softmax: dx = p * (dy - sum_j dy_j p_j) per row.
void softmax_masked_rows_backward(const double* p, const double* dy, double* dx, i64 rows, i64 cols);

// Per-row layer normalization with affine gain/shift. Writes the
// normalized pre-affine values xhat and per-row 1/sqrt(var+eps) for the
// backward pass.
void layer_norm_rows(const double* x, const double* gain, const double* shift, double* y, double* xhat,
                     double* inv_std, i64 rows, i64 cols, double eps);

void layer_norm_rows_backward(const double* xhat, const double* inv_std, const double* gain, const double* dy,
                              double* dx, double* dgain, double* dshift, i64 rows, i64 cols);

// Elementwise helpers (parallel, trivially deterministic).
void add(const double* a, const double* b, double* c, i64 n);
void sub(const double* a, const double* b, double* c, i64 n);
void mul(const double* a, const double* b, double* c, i64 n);
void scale(const double* a, double s, double* c, i64 n);
void axpy(double alpha, const double* x, double* y, i64 n);  // y += alpha * x
void relu(const double* x, double* y, i64 n);
void relu_backward(const double* x, const double* dy, double* dx, i64 n);

// Serial sum; kept serial on purpose so reductions do not depend on the
// thread count.
double sum(const double* x, i64 n);

namespace serial {
void gemm(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void gemm_nt(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void gemm_tn(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);
void bmm(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n);
void bmm_nt(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n);
void bmm_tn(const double* a, const double* b, double* c, i64 nb, i64 m, i64 k, i64 n);
void softmax_masked_rows(const double* x, const unsigned char* keep, double* y, i64 rows, i64 cols);
void layer_norm_rows(const double* x, const double* gain, const double* shift, double* y, double* xhat,
                     double* inv_std, i64 rows, i64 cols, double eps);
}  // namespace serial

}  // namespace driftforge::kernels
