#include "sviplus/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace sviplus::kernels {
namespace {

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scatter_axpy_neon(double a, const double* x, const unsigned* idx, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[idx[i]] += a * x[i];
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void blend_neon(double rho, const double* lambda, const double* eta, const double* grad, double* out,
                std::size_t n) {
  const double keep = 1.0 - rho;
  const float64x2_t kv = vdupq_n_f64(keep);
  const float64x2_t rv = vdupq_n_f64(rho);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t target = vaddq_f64(vld1q_f64(eta + i), vld1q_f64(grad + i));
    vst1q_f64(out + i, vaddq_f64(vmulq_f64(kv, vld1q_f64(lambda + i)), vmulq_f64(rv, target)));
  }
  for (; i < n; ++i) out[i] = keep * lambda[i] + rho * (eta[i] + grad[i]);
}

void scale_neon(double a, double* x, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(av, vld1q_f64(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{Isa::Neon, axpy_neon, scatter_axpy_neon, dot_neon,
                                 blend_neon, scale_neon, sum_neon};
  return &table;
}

}  // namespace sviplus::kernels

#else

namespace sviplus::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace sviplus::kernels

#endif
