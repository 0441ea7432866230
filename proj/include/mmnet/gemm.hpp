#pragma once

namespace mmnet {

// Row-major general matrix multiply:
//   C[m x n] = alpha * op(A) * op(B) + beta * C
// where op(X) is X or X^T per the transpose flags. Single-threaded and
// run-to-run deterministic for fixed inputs on one machine.
//
// Backed by an optimized BLAS when one can be loaded (see gemm.cpp for the
// provider search order; MMNET_BLAS_LIB overrides it), otherwise by a
// portable blocked kernel.
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc);

// Name of the backend that ended up being used ("internal" for the
// portable kernel). Resolved lazily on first dgemm call.
const char* gemm_provider();

}  // namespace mmnet
