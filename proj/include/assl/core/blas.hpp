#pragma once

#include <cstdint>

#include <cblas.h>

namespace assl {

namespace detail {
// GEMMs are issued per image from OpenMP loops; the library's own thread
// pool would only add sync overhead on top of that, so it is pinned to one
// thread the first time any GEMM runs.
inline bool pin_blas_threads() {
  openblas_set_num_threads(1);
  return true;
}
}  // namespace detail

/// C[m x n] = alpha * A (op) B + beta * C, row-major.
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 float alpha, const float* a, int64_t lda, const float* b,
                 int64_t ldb, float beta, float* c, int64_t ldc) {
  static const bool pinned = detail::pin_blas_threads();
  (void)pinned;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 double alpha, const double* a, int64_t lda, const double* b,
                 int64_t ldb, double beta, double* c, int64_t ldc) {
  static const bool pinned = detail::pin_blas_threads();
  (void)pinned;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

}  // namespace assl
