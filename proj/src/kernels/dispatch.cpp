#include <atomic>
#include <cstdlib>
#include <string>

#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"

namespace sviplus::kernels {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &scalar_table();
    case Isa::Avx2:
      return cpu_has_avx2() ? avx2_table() : nullptr;
    case Isa::Neon:
      return neon_table();  // NEON is baseline on aarch64
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* forced = std::getenv("SVIPLUS_KERNEL"); forced != nullptr && *forced != '\0') {
    const KernelTable* t = table_for(parse_isa(forced));
    if (t == nullptr) throw ContractError(std::string("SVIPLUS_KERNEL=") + forced + " is not supported here");
    return t;
  }
  if (const KernelTable* t = table_for(Isa::Avx2)) return t;
  if (const KernelTable* t = table_for(Isa::Neon)) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{nullptr};
  return current;
}

}  // namespace

bool isa_supported(Isa isa) { return table_for(isa) != nullptr; }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "neon") return Isa::Neon;
  throw ContractError("unknown kernel variant '" + std::string(name) + "'");
}

const KernelTable& active() {
  const KernelTable* t = slot().load(std::memory_order_acquire);
  if (t == nullptr) {
    const KernelTable* chosen = pick_default();
    const KernelTable* expected = nullptr;
    slot().compare_exchange_strong(expected, chosen, std::memory_order_acq_rel);
    t = slot().load(std::memory_order_acquire);
  }
  return *t;
}

void set_active_isa(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) throw ContractError("kernel variant '" + std::string(isa_name(isa)) + "' is not supported here");
  slot().store(t, std::memory_order_release);
}

}  // namespace sviplus::kernels
