#include <cstdlib>
#include <string>

#include "pkil/error.hpp"
#include "pkil/simd/kernels.hpp"

namespace pkil::simd {

#if defined(PKIL_HAVE_AVX2_TU)
namespace avx2 {
extern const KernelTable kTable;
}
#endif
#if defined(PKIL_HAVE_NEON_TU)
namespace neon {
extern const KernelTable kTable;
}
#endif

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

bool available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(PKIL_HAVE_AVX2_TU)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(PKIL_HAVE_NEON_TU)
      return true;  // mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) {
    throw Error("isa-unavailable", "SIMD variant " + std::string(isa_name(isa)) +
                                       " is not available on this build/CPU");
  }
  switch (isa) {
#if defined(PKIL_HAVE_AVX2_TU)
    case Isa::avx2:
      return avx2::kTable;
#endif
#if defined(PKIL_HAVE_NEON_TU)
    case Isa::neon:
      return neon::kTable;
#endif
    default:
      return scalar::kTable;
  }
}

namespace {

Isa select_isa() noexcept {
  if (const char* forced = std::getenv("PKIL_ISA"); forced != nullptr) {
    const std::string_view name(forced);
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2" && available(Isa::avx2)) return Isa::avx2;
    if (name == "neon" && available(Isa::neon)) return Isa::neon;
  }
  if (available(Isa::avx2)) return Isa::avx2;
  if (available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

}  // namespace

Isa active_isa() noexcept {
  static const Isa isa = select_isa();
  return isa;
}

const KernelTable& active() noexcept {
  static const KernelTable& t = table(active_isa());
  return t;
}

}  // namespace pkil::simd
