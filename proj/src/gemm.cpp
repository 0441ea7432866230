#include "mmnet/gemm.hpp"

#include <dlfcn.h>
#include <glob.h>
#include <stdlib.h>

#include <algorithm>
#include <cstring>
#include <mutex>
#include <string>
#include <vector>

namespace mmnet {
namespace {

using CblasDgemmFn = void (*)(int order, int trans_a, int trans_b, int m,
                              int n, int k, double alpha, const double* a,
                              int lda, const double* b, int ldb, double beta,
                              double* c, int ldc);
using SetThreadsFn = void (*)(int);

constexpr int kCblasRowMajor = 101;
constexpr int kCblasNoTrans = 111;
constexpr int kCblasTrans = 112;

struct Provider {
  CblasDgemmFn cblas_dgemm = nullptr;
  std::string name = "internal";
};

// Portable blocked fallback. Row-major, op(A) materialized per K-panel so the
// inner loop is a plain (i,k,j) accumulation the compiler can vectorize.
void internal_dgemm(bool trans_a, bool trans_b, int m, int n, int k,
                    double alpha, const double* a, int lda, const double* b,
                    int ldb, double beta, double* c, int ldc) {
  if (beta == 0.0) {
    for (int i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
  } else if (beta != 1.0) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c[i * ldc + j] *= beta;
  }
  constexpr int kc = 256;
  std::vector<double> apack;
  std::vector<double> bpack;
  for (int k0 = 0; k0 < k; k0 += kc) {
    const int kb = std::min(kc, k - k0);
    apack.assign(static_cast<size_t>(m) * kb, 0.0);
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < kb; ++p)
        apack[static_cast<size_t>(i) * kb + p] =
            trans_a ? a[static_cast<size_t>(k0 + p) * lda + i]
                    : a[static_cast<size_t>(i) * lda + k0 + p];
    bpack.assign(static_cast<size_t>(kb) * n, 0.0);
    for (int p = 0; p < kb; ++p)
      for (int j = 0; j < n; ++j)
        bpack[static_cast<size_t>(p) * n + j] =
            trans_b ? b[static_cast<size_t>(j) * ldb + k0 + p]
                    : b[static_cast<size_t>(k0 + p) * ldb + j];
    for (int i = 0; i < m; ++i) {
      double* crow = c + static_cast<size_t>(i) * ldc;
      for (int p = 0; p < kb; ++p) {
        const double av = alpha * apack[static_cast<size_t>(i) * kb + p];
        const double* brow = bpack.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void force_single_thread(void* handle) {
  for (const char* sym :
       {"openblas_set_num_threads", "scipy_openblas_set_num_threads",
        "goto_set_num_threads"}) {
    if (auto fn = reinterpret_cast<SetThreadsFn>(dlsym(handle, sym))) {
      fn(1);
      return;
    }
  }
}

bool try_load(Provider& p, const char* path) {
  void* handle = dlopen(path, RTLD_NOW | RTLD_LOCAL);
  if (!handle) return false;
  for (const char* sym : {"cblas_dgemm", "scipy_cblas_dgemm"}) {
    if (auto fn = reinterpret_cast<CblasDgemmFn>(dlsym(handle, sym))) {
      force_single_thread(handle);
      p.cblas_dgemm = fn;
      p.name = path;
      return true;
    }
  }
  dlclose(handle);
  return false;
}

std::vector<std::string> glob_paths(const char* pattern) {
  std::vector<std::string> out;
  glob_t g;
  if (glob(pattern, 0, nullptr, &g) == 0) {
    for (size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

Provider resolve_provider() {
  Provider p;
  // Keep any BLAS we load single-threaded: tensor ops promise results
  // bit-identical to sequential execution.
  setenv("OPENBLAS_NUM_THREADS", "1", 1);
  setenv("OMP_NUM_THREADS", "1", 0);

  if (const char* forced = getenv("MMNET_BLAS_LIB")) {
    if (std::strcmp(forced, "internal") == 0) return p;
    if (try_load(p, forced)) return p;
    return p;  // fall back to internal rather than failing
  }

  // OpenBLAS builds that predate this CPU generation mis-detect it and pick a
  // pre-AVX512 kernel (~4x slower). Loading via dlopen lets us pin the kernel
  // family through the environment before the library initializes.
#if defined(__x86_64__)
  if (!getenv("OPENBLAS_CORETYPE") && __builtin_cpu_supports("avx512f") &&
      __builtin_cpu_supports("avx512dq") && __builtin_cpu_supports("avx512bw") &&
      __builtin_cpu_supports("avx512vl")) {
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
  }
#endif

  // Newer OpenBLAS bundled with scipy/numpy wheels, if present, then the
  // system library, then the generic BLAS alternative.
  for (const char* pattern :
       {"/usr/local/lib/python3*/dist-packages/scipy.libs/libscipy_openblas-*.so",
        "/usr/lib/python3*/dist-packages/scipy.libs/libscipy_openblas-*.so"}) {
    for (const std::string& path : glob_paths(pattern)) {
      if (try_load(p, path.c_str())) return p;
    }
  }
  for (const char* path : {"libopenblas.so.0", "libopenblas.so", "libblas.so.3"}) {
    if (try_load(p, path)) return p;
  }
  return p;
}

const Provider& provider() {
  static const Provider p = resolve_provider();
  return p;
}

}  // namespace

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  const Provider& p = provider();
  if (p.cblas_dgemm) {
    p.cblas_dgemm(kCblasRowMajor, trans_a ? kCblasTrans : kCblasNoTrans,
                  trans_b ? kCblasTrans : kCblasNoTrans, m, n, k, alpha, a, lda,
                  b, ldb, beta, c, ldc);
  } else {
    internal_dgemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c,
                   ldc);
  }
}

const char* gemm_provider() { return provider().name.c_str(); }

}  // namespace mmnet
