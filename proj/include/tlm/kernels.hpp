#pragma once

// Inner-loop arithmetic. Every kernel has a portable scalar reference
// implementation; an AVX2/FMA variant is compiled in a separate translation
// unit and picked at runtime when the CPU supports it. The two are required
// to agree to within float rounding (see tests/test_kernels.cpp), not
// bit-for-bit: summation order differs.

#include <cstddef>
#include <string_view>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE
namespace kernels {

struct KernelTable {
  const char* name;
  /// sum_i x[i] * y[i]
  real (*dot)(const real* x, const real* y, std::size_t n);
  /// y += alpha * x
  void (*axpy)(real alpha, const real* x, real* y, std::size_t n);
  /// x *= alpha
  void (*scale)(real alpha, real* x, std::size_t n);
  /// y[i] += x[i] * z[i]
  void (*fmaVec)(const real* x, const real* z, real* y, std::size_t n);
  real (*sum)(const real* x, std::size_t n);
  real (*maxValue)(const real* x, std::size_t n);
  /// C[m x n] += A * B[k x n], where A(i, p) = a[i * ars + p * acs]. Covers
  /// both A and A^T without copying.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t ars, std::size_t acs,
               const real* b, std::size_t ldb, real* c, std::size_t ldc);
};

const KernelTable& scalarKernels();

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks it.
const KernelTable* avx2Kernels();

/// Kernels currently in use. Chosen once from the TLM_SIMD environment
/// variable ("scalar", "avx2", default "auto").
const KernelTable& active();

/// Override the selection (tests use this to compare variants). Not
/// thread-safe; call before any concurrent work starts.
void setActive(const KernelTable& table);

bool selectByName(std::string_view name);

// Row-major GEMM helpers built on the active table. All accumulate into C
// (C += op(A) * op(B)); callers zero C first when they want a plain product.

/// C[m x n] += A[m x k] * B[k x n]
void gemmNN(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t lda,
            const real* b, std::size_t ldb, real* c, std::size_t ldc);
/// C[m x n] += A[m x k] * B[n x k]^T
void gemmNT(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t lda,
            const real* b, std::size_t ldb, real* c, std::size_t ldc);
/// C[m x n] += A[k x m]^T * B[k x n]
void gemmTN(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t lda,
            const real* b, std::size_t ldb, real* c, std::size_t ldc);

}  // namespace kernels
TLM_END_NAMESPACE
