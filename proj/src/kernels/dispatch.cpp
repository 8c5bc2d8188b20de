#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "hetsched/kernels.hpp"

namespace hetsched::kernels {

namespace {

const KernelTable* detect() {
  if (const char* forced = std::getenv("HETSCHED_KERNELS")) {
    try {
      Isa isa = parse_isa(forced);
      if (supported(isa)) return &table(isa);
    } catch (const std::invalid_argument&) {
      // unknown name: fall through to auto-detection
    }
  }
#if defined(HETSCHED_HAVE_AVX2)
  if (supported(Isa::avx2)) return &avx2_table();
#endif
#if defined(HETSCHED_HAVE_NEON)
  return &neon_table();
#endif
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{detect()};
  return ptr;
}

}  // namespace

bool supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(HETSCHED_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(HETSCHED_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) throw std::invalid_argument("kernel variant not available on this build/CPU");
  switch (isa) {
#if defined(HETSCHED_HAVE_AVX2)
    case Isa::avx2:
      return avx2_table();
#endif
#if defined(HETSCHED_HAVE_NEON)
    case Isa::neon:
      return neon_table();
#endif
    default:
      return scalar_table();
  }
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_relaxed); }

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "neon") return Isa::neon;
  throw std::invalid_argument("unknown kernel variant '" + std::string(name) + "'");
}

}  // namespace hetsched::kernels
