#include "sviplus/kernels.hpp"

namespace sviplus::kernels {
namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scatter_axpy_scalar(double a, const double* x, const unsigned* idx, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[idx[i]] += a * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void blend_scalar(double rho, const double* lambda, const double* eta, const double* grad, double* out,
                  std::size_t n) {
  const double keep = 1.0 - rho;
  for (std::size_t i = 0; i < n; ++i) out[i] = keep * lambda[i] + rho * (eta[i] + grad[i]);
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar, axpy_scalar, scatter_axpy_scalar, dot_scalar,
                                 blend_scalar, scale_scalar, sum_scalar};
  return table;
}

}  // namespace sviplus::kernels
