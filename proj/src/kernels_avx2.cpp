// AVX2/FMA variants of the kernel table. This file is the only one compiled
// with -mavx2 -mfma; nothing here runs unless the CPU check passes.

#include "tlm/kernels.hpp"

#if defined(TLM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

TLM_BEGIN_NAMESPACE
namespace kernels {
namespace {

#if defined(TLM_REAL_DOUBLE)
struct Lane {
  using vec = __m256d;
  static constexpr std::size_t width = 4;
  static vec zero() { return _mm256_setzero_pd(); }
  static vec set1(double v) { return _mm256_set1_pd(v); }
  static vec load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, vec v) { _mm256_storeu_pd(p, v); }
  static vec fmadd(vec a, vec b, vec c) { return _mm256_fmadd_pd(a, b, c); }
  static vec add(vec a, vec b) { return _mm256_add_pd(a, b); }
  static vec mul(vec a, vec b) { return _mm256_mul_pd(a, b); }
  static vec max(vec a, vec b) { return _mm256_max_pd(a, b); }
  static double hsum(vec v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
  static double hmax(vec v) {
    alignas(32) double tmp[4];
    _mm256_store_pd(tmp, v);
    return std::max(std::max(tmp[0], tmp[1]), std::max(tmp[2], tmp[3]));
  }
};
#else
struct Lane {
  using vec = __m256;
  static constexpr std::size_t width = 8;
  static vec zero() { return _mm256_setzero_ps(); }
  static vec set1(float v) { return _mm256_set1_ps(v); }
  static vec load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, vec v) { _mm256_storeu_ps(p, v); }
  static vec fmadd(vec a, vec b, vec c) { return _mm256_fmadd_ps(a, b, c); }
  static vec add(vec a, vec b) { return _mm256_add_ps(a, b); }
  static vec mul(vec a, vec b) { return _mm256_mul_ps(a, b); }
  static vec max(vec a, vec b) { return _mm256_max_ps(a, b); }
  static float hsum(vec v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
    return _mm_cvtss_f32(lo);
  }
  static float hmax(vec v) {
    alignas(32) float tmp[8];
    _mm256_store_ps(tmp, v);
    float m = tmp[0];
    for (int i = 1; i < 8; ++i) m = std::max(m, tmp[i]);
    return m;
  }
};
#endif

constexpr std::size_t W = Lane::width;

real dotAvx2(const real* x, const real* y, std::size_t n) {
  Lane::vec acc0 = Lane::zero();
  Lane::vec acc1 = Lane::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    acc0 = Lane::fmadd(Lane::load(x + i), Lane::load(y + i), acc0);
    acc1 = Lane::fmadd(Lane::load(x + i + W), Lane::load(y + i + W), acc1);
  }
  for (; i + W <= n; i += W) acc0 = Lane::fmadd(Lane::load(x + i), Lane::load(y + i), acc0);
  real acc = Lane::hsum(Lane::add(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpyAvx2(real alpha, const real* x, real* y, std::size_t n) {
  const Lane::vec a = Lane::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) Lane::store(y + i, Lane::fmadd(a, Lane::load(x + i), Lane::load(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scaleAvx2(real alpha, real* x, std::size_t n) {
  const Lane::vec a = Lane::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) Lane::store(x + i, Lane::mul(a, Lane::load(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void fmaVecAvx2(const real* x, const real* z, real* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W)
    Lane::store(y + i, Lane::fmadd(Lane::load(x + i), Lane::load(z + i), Lane::load(y + i)));
  for (; i < n; ++i) y[i] += x[i] * z[i];
}

real sumAvx2(const real* x, std::size_t n) {
  Lane::vec acc = Lane::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc = Lane::add(acc, Lane::load(x + i));
  real s = Lane::hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

real maxAvx2(const real* x, std::size_t n) {
  real m = -std::numeric_limits<real>::infinity();
  std::size_t i = 0;
  if (n >= W) {
    Lane::vec acc = Lane::set1(m);
    for (; i + W <= n; i += W) acc = Lane::max(acc, Lane::load(x + i));
    m = Lane::hmax(acc);
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

// Register-blocked 4 x (2 vectors) micro-kernel over row-major B.
void gemmAvx2(std::size_t m, std::size_t n, std::size_t k, const real* a, std::size_t ars, std::size_t acs,
              const real* b, std::size_t ldb, real* c, std::size_t ldc) {
  constexpr std::size_t MR = 4, NR = 2 * W;
  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    const real* a0 = a + i * ars;
    std::size_t j = 0;
    for (; j + NR <= n; j += NR) {
      Lane::vec acc[MR][2];
      for (std::size_t r = 0; r < MR; ++r) {
        acc[r][0] = Lane::load(c + (i + r) * ldc + j);
        acc[r][1] = Lane::load(c + (i + r) * ldc + j + W);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const Lane::vec b0 = Lane::load(b + p * ldb + j);
        const Lane::vec b1 = Lane::load(b + p * ldb + j + W);
        for (std::size_t r = 0; r < MR; ++r) {
          const Lane::vec av = Lane::set1(a0[r * ars + p * acs]);
          acc[r][0] = Lane::fmadd(av, b0, acc[r][0]);
          acc[r][1] = Lane::fmadd(av, b1, acc[r][1]);
        }
      }
      for (std::size_t r = 0; r < MR; ++r) {
        Lane::store(c + (i + r) * ldc + j, acc[r][0]);
        Lane::store(c + (i + r) * ldc + j + W, acc[r][1]);
      }
    }
    for (; j + W <= n; j += W) {
      Lane::vec acc[MR];
      for (std::size_t r = 0; r < MR; ++r) acc[r] = Lane::load(c + (i + r) * ldc + j);
      for (std::size_t p = 0; p < k; ++p) {
        const Lane::vec b0 = Lane::load(b + p * ldb + j);
        for (std::size_t r = 0; r < MR; ++r) acc[r] = Lane::fmadd(Lane::set1(a0[r * ars + p * acs]), b0, acc[r]);
      }
      for (std::size_t r = 0; r < MR; ++r) Lane::store(c + (i + r) * ldc + j, acc[r]);
    }
    // Same accumulation order as the row remainder below, so a row's result
    // does not depend on where it falls in the blocking.
    for (; j < n; ++j)
      for (std::size_t r = 0; r < MR; ++r) {
        real& out = c[(i + r) * ldc + j];
        for (std::size_t p = 0; p < k; ++p) out = std::fma(a0[r * ars + p * acs], b[p * ldb + j], out);
      }
  }
  for (; i < m; ++i) {
    const real* arow = a + i * ars;
    real* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) axpyAvx2(arow[p * acs], b + p * ldb, crow, n);
  }
}

constexpr KernelTable kAvx2{"avx2", dotAvx2, axpyAvx2, scaleAvx2, fmaVecAvx2, sumAvx2, maxAvx2, gemmAvx2};

}  // namespace

const KernelTable* avx2Kernels() {
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2 : nullptr;
}

}  // namespace kernels
TLM_END_NAMESPACE

#else

TLM_BEGIN_NAMESPACE
namespace kernels {
const KernelTable* avx2Kernels() { return nullptr; }
}  // namespace kernels
TLM_END_NAMESPACE

#endif
