#include "gemm.hpp"

#include <cblas.h>

#include <mutex>

namespace veinpatch::detail {

namespace {

// One BLAS thread keeps results independent of the machine's core count and
// safe to call from the evaluation worker pool.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

CBLAS_TRANSPOSE flag(bool t) { return t ? CblasTrans : CblasNoTrans; }

}  // namespace

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, flag(trans_a), flag(trans_b), m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                  int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, flag(trans_a), flag(trans_b), m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
}

}  // namespace veinpatch::detail
