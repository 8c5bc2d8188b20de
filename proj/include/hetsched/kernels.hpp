#pragma once

// Dense inner loops used by the neural substrate. Every kernel has a scalar
// reference implementation and, where the target supports it, an AVX2 (x86-64)
// or NEON (aarch64) variant. Variants use the same per-element operation order
// without fused multiply-add, so they agree with the scalar path bit-for-bit.
// The active table is picked at startup from the CPU's capabilities and can be
// forced with HETSCHED_KERNELS=scalar|avx2|neon or select().

#include <cstddef>
#include <string_view>

namespace hetsched::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  const char* name;
  /// y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  /// y[i] += x[i]
  void (*add)(std::size_t n, const double* x, double* y);
  /// out[i] = max(x[i], 0)
  void (*relu)(std::size_t n, const double* x, double* out);
  /// dx[i] += x[i] > 0 ? dy[i] : 0
  void (*relu_backward)(std::size_t n, const double* x, const double* dy, double* dx);
  /// dx[i] += dy[i] * (1 - y[i] * y[i]) where y = tanh(x)
  void (*tanh_backward)(std::size_t n, const double* y, const double* dy, double* dx);
};

const KernelTable& scalar_table() noexcept;
#if defined(HETSCHED_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(HETSCHED_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif

/// Whether this build contains the variant and the running CPU can execute it.
bool supported(Isa isa) noexcept;
const KernelTable& table(Isa isa);
const KernelTable& active() noexcept;
/// Switches the process-wide table. Throws std::invalid_argument if unsupported.
void select(Isa isa);
Isa parse_isa(std::string_view name);

}  // namespace hetsched::kernels
