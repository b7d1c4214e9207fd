#include "actuforge/tensor.hpp"

#include <cblas.h>

// Fixed BLAS thread count: OpenBLAS partitions output tiles across threads,
// so each element keeps a fixed reduction order and results stay bit-identical
// across runs. Pinned to a constant rather than the core count so artifacts do
// not depend on the machine.
namespace {
struct BlasInit {
    BlasInit() { openblas_set_num_threads(2); }
};
const BlasInit blas_init;
}  // namespace

namespace af {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace af
