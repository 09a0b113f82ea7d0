#pragma once

// Dense inner-loop kernels. Every kernel has a scalar reference implementation
// and, where the target supports it, an AVX2+FMA (x86-64) or NEON (aarch64)
// variant. The variant is chosen once per process from the CPU's feature set
// and can be forced with the SVIPLUS_KERNEL environment variable
// ("scalar", "avx2", "neon") or set_active_isa().
//
// Variants agree to within a few ulps but are not bit-identical, because the
// vector variants accumulate reductions in lanes. Within one process the
// selected variant never changes, so runs are reproducible for a fixed seed.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace sviplus::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  /// y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// y[idx[i]] += a * x[i]
  void (*scatter_axpy)(double a, const double* x, const unsigned* idx, double* y, std::size_t n);
  /// sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// out = (1 - rho) * lambda + rho * (eta + grad)
  void (*blend)(double rho, const double* lambda, const double* eta, const double* grad, double* out,
                std::size_t n);
  /// x *= a
  void (*scale)(double a, double* x, std::size_t n);
  /// sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();
/// Null when the variant was not compiled for this target.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);
/// Throws ContractError for unknown names.
Isa parse_isa(std::string_view name);

/// The table in use. Selected lazily on first call.
const KernelTable& active();
/// Force a variant. Throws ContractError if the CPU or build lacks it.
void set_active_isa(Isa isa);

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

}  // namespace sviplus::kernels
