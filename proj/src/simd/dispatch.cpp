#include <atomic>
#include <cstdlib>

#include "amcnn/simd/kernels.hpp"

namespace amcnn::simd {

// Defined in kernels_avx2.cpp; returns nullptr when compiled without AVX2.
const KernelTable* avx2_kernel_table();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_initial() {
  const KernelTable* best = avx2_kernels();
  if (best == nullptr) best = &scalar_kernels();
  if (const char* forced = std::getenv("AMCNN_ISA")) {
    if (auto isa = parse_isa(forced)) {
      if (*isa == Isa::Scalar) return &scalar_kernels();
      if (*isa == Isa::Avx2 && avx2_kernels() != nullptr) return avx2_kernels();
    }
  }
  return best;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{select_initial()};
  return slot;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable* table = cpu_has_avx2_fma() ? avx2_kernel_table() : nullptr;
  return table;
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_relaxed); }

bool set_isa(Isa isa) {
  const KernelTable* table = isa == Isa::Scalar ? &scalar_kernels() : avx2_kernels();
  if (table == nullptr) return false;
  active_slot().store(table, std::memory_order_relaxed);
  return true;
}

Isa active_isa() { return kernels().isa; }

std::string_view isa_name(Isa isa) { return isa == Isa::Scalar ? "scalar" : "avx2"; }

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  return std::nullopt;
}

}  // namespace amcnn::simd
