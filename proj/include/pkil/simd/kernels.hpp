#pragma once

// Data-parallel inner loops used by the embedding and rule-engine modules.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on aarch64) are selected once at startup from the CPU's
// reported features. Setting PKIL_ISA=scalar in the environment forces the
// reference path. Vector variants reassociate sums, so results agree with the
// scalar path to rounding, not bit-for-bit; within one process the selection
// is fixed, so repeated calls are bit-reproducible.

#include <cstddef>
#include <span>
#include <string_view>

namespace pkil::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]^2
  double (*squared_norm)(const double* a, std::size_t n);
  // x[i] *= factor
  void (*scale_inplace)(double* x, std::size_t n, double factor);
  // out[r] = dot(rows + r * dim, query) for r in [0, n_rows)
  void (*dot_rows)(const double* rows, std::size_t n_rows, std::size_t dim, const double* query,
                   double* out);
  // lo[i] = in[i] * (1 - p); hi[i] = in[i] * p
  void (*split_mass)(const double* in, std::size_t n, double p, double* lo, double* hi);
};

/// Kernel table for a specific ISA. Throws if `isa` is not compiled in or
/// not supported by the running CPU.
const KernelTable& table(Isa isa);

/// True when `isa` was compiled in and the running CPU supports it.
bool available(Isa isa) noexcept;

/// The ISA chosen at startup.
Isa active_isa() noexcept;

const KernelTable& active() noexcept;

namespace scalar {
extern const KernelTable kTable;
}

// Span conveniences over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_norm(std::span<const double> a) noexcept {
  return active().squared_norm(a.data(), a.size());
}

}  // namespace pkil::simd
