#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "aemot/simd/kernels.hpp"

namespace aemot::simd {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* select_initial() {
  if (const char* env = std::getenv("AEMOT_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && isa_supported(Isa::avx2)) return &kernels_for(Isa::avx2);
  }
  if (isa_supported(Isa::avx2)) return &kernels_for(Isa::avx2);
  return &scalar_kernels();
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

std::vector<Isa> supported_isas() {
  std::vector<Isa> out{Isa::scalar};
  if (isa_supported(Isa::avx2)) out.push_back(Isa::avx2);
  return out;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("SIMD variant not supported on this CPU: " +
                                std::string(isa_name(isa)));
  }
  switch (isa) {
    case Isa::scalar:
      return scalar_kernels();
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return avx2_kernels();
#else
      break;
#endif
  }
  throw std::invalid_argument("unknown SIMD variant");
}

const KernelTable& kernels() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    const KernelTable* chosen = select_initial();
    const KernelTable* expected = nullptr;
    g_active.compare_exchange_strong(expected, chosen, std::memory_order_acq_rel);
    t = g_active.load(std::memory_order_acquire);
  }
  return *t;
}

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) { g_active.store(&kernels_for(isa), std::memory_order_release); }

}  // namespace aemot::simd
