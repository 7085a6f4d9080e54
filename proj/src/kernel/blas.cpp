#include "trace/kernel/blas.hpp"

#include <cblas.h>

#include <cmath>
#include <cstdint>
#include <cstring>

extern "C" void openblas_set_num_threads(int);
extern "C" int openblas_get_num_threads(void);

namespace trace::kernel {

namespace {
CBLAS_TRANSPOSE tr(bool t) { return t ? CblasTrans : CblasNoTrans; }
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, tr(trans_a), tr(trans_b), m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, tr(trans_a), tr(trans_b), m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void set_blas_threads(int n) { openblas_set_num_threads(n < 1 ? 1 : n); }
int blas_threads() { return openblas_get_num_threads(); }

void exp_inplace(float* x, std::size_t n) {
  // Cody-Waite range reduction, degree-6 polynomial, exponent assembled by
  // integer add. Rounding uses the 1.5*2^23 trick so the loop stays branch-free.
  for (std::size_t i = 0; i < n; ++i) {
    float v = x[i];
    v = v < -87.0f ? -87.0f : v;
    v = v > 88.0f ? 88.0f : v;
    const float t = v * 1.44269504088896341f + 12582912.0f;
    const float nf = t - 12582912.0f;
    std::int32_t ti;
    std::memcpy(&ti, &t, 4);
    const std::int32_t ni = ti - 0x4B400000;
    const float r = (v - nf * 0.693145751953125f) - nf * 1.42860682030941723212e-6f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const std::int32_t sb = (ni + 127) << 23;
    float s;
    std::memcpy(&s, &sb, 4);
    x[i] = p * s;
  }
}

void exp_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

}  // namespace trace::kernel
