#include <algorithm>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "tlm/kernels.hpp"

TLM_BEGIN_NAMESPACE
namespace kernels {
namespace {

real dotScalar(const real* x, const real* y, std::size_t n) {
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpyScalar(real alpha, const real* x, real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scaleScalar(real alpha, real* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void fmaVecScalar(const real* x, const real* z, real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i] * z[i];
}

real sumScalar(const real* x, std::size_t n) {
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

real maxScalar(const real* x, std::size_t n) {
  real m = -std::numeric_limits<real>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void gemmScalar(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t ars, std::size_t acs,
                const real* b, std::size_t ldb, real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    real* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const real av = a[i * ars + p * acs];
      const real* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr KernelTable kScalar{"scalar", dotScalar, axpyScalar, scaleScalar,
                              fmaVecScalar, sumScalar, maxScalar, gemmScalar};

const KernelTable* initialSelection() {
  const char* env = std::getenv("TLM_SIMD");
  std::string want = env ? env : "auto";
  if (want == "scalar") return &kScalar;
  if (const KernelTable* simd = avx2Kernels()) return simd;
  return &kScalar;
}

const KernelTable*& current() {
  static const KernelTable* table = initialSelection();
  return table;
}

}  // namespace

const KernelTable& scalarKernels() { return kScalar; }

const KernelTable& active() { return *current(); }

void setActive(const KernelTable& table) { current() = &table; }

bool selectByName(std::string_view name) {
  if (name == "scalar") {
    setActive(kScalar);
    return true;
  }
  if (name == "avx2" || name == "auto") {
    if (const KernelTable* simd = avx2Kernels()) {
      setActive(*simd);
      return true;
    }
    if (name == "auto") {
      setActive(kScalar);
      return true;
    }
  }
  return false;
}

void gemmNN(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t lda,
            const real* b, std::size_t ldb, real* c, std::size_t ldc) {
  active().gemm(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

void gemmNT(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t lda,
            const real* b, std::size_t ldb, real* c, std::size_t ldc) {
  // Transpose B once so the inner loop streams contiguous rows.
  thread_local std::vector<real> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * ldb + p];
  active().gemm(m, n, k, a, lda, 1, bt.data(), n, c, ldc);
}

void gemmTN(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t lda,
            const real* b, std::size_t ldb, real* c, std::size_t ldc) {
  active().gemm(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

}  // namespace kernels
TLM_END_NAMESPACE
