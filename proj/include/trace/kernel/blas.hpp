#pragma once

#include <cstddef>

namespace trace::kernel {

/// C = alpha * op(A) * op(B) + beta * C, row-major. op(X) = X^T when the flag is set.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

/// Number of BLAS worker threads (1 keeps reductions in a fixed order).
void set_blas_threads(int n);
int blas_threads();

/// exp applied in place to n values; the float path uses a vectorisable
/// polynomial (max rel. error ~1e-7), the double path std::exp.
void exp_inplace(float* x, std::size_t n);
void exp_inplace(double* x, std::size_t n);

}  // namespace trace::kernel
