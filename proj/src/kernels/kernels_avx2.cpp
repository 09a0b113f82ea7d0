#include "sviplus/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace sviplus::kernels {
namespace {

// Compiled with -mavx2 -mfma; only reached after a cpuid check.

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scatter_axpy_avx2(double a, const double* x, const unsigned* idx, double* y, std::size_t n) {
  // No scatter in AVX2; the multiply is vectorized and the stores are scalar.
  const __m256d av = _mm256_set1_pd(a);
  alignas(32) double tmp[4];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_store_pd(tmp, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    y[idx[i]] += tmp[0];
    y[idx[i + 1]] += tmp[1];
    y[idx[i + 2]] += tmp[2];
    y[idx[i + 3]] += tmp[3];
  }
  for (; i < n; ++i) y[idx[i]] += a * x[i];
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void blend_avx2(double rho, const double* lambda, const double* eta, const double* grad, double* out,
                std::size_t n) {
  const double keep = 1.0 - rho;
  const __m256d kv = _mm256_set1_pd(keep);
  const __m256d rv = _mm256_set1_pd(rho);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d target = _mm256_add_pd(_mm256_loadu_pd(eta + i), _mm256_loadu_pd(grad + i));
    // Product then add, matching the scalar rounding sequence.
    const __m256d v = _mm256_add_pd(_mm256_mul_pd(kv, _mm256_loadu_pd(lambda + i)), _mm256_mul_pd(rv, target));
    _mm256_storeu_pd(out + i, v);
  }
  for (; i < n; ++i) out[i] = keep * lambda[i] + rho * (eta[i] + grad[i]);
}

void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::Avx2, axpy_avx2, scatter_axpy_avx2, dot_avx2,
                                 blend_avx2, scale_avx2, sum_avx2};
  return &table;
}

}  // namespace sviplus::kernels

#else

namespace sviplus::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace sviplus::kernels

#endif
