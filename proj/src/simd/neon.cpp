#include <arm_neon.h>

#include "pkil/simd/kernels.hpp"

namespace pkil::simd::neon {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double squared_norm(const double* a, std::size_t n) { return dot(a, a, n); }

void scale_inplace(double* x, std::size_t n, double factor) {
  const float64x2_t f = vdupq_n_f64(factor);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), f));
  for (; i < n; ++i) x[i] *= factor;
}

void dot_rows(const double* rows, std::size_t n_rows, std::size_t dim, const double* query,
              double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot(rows + r * dim, query, dim);
}

void split_mass(const double* in, std::size_t n, double p, double* lo, double* hi) {
  const double q = 1.0 - p;
  const float64x2_t vp = vdupq_n_f64(p);
  const float64x2_t vq = vdupq_n_f64(q);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t x = vld1q_f64(in + i);
    vst1q_f64(lo + i, vmulq_f64(x, vq));
    vst1q_f64(hi + i, vmulq_f64(x, vp));
  }
  for (; i < n; ++i) {
    lo[i] = in[i] * q;
    hi[i] = in[i] * p;
  }
}

}  // namespace

extern const KernelTable kTable;
const KernelTable kTable{&dot, &squared_norm, &scale_inplace, &dot_rows, &split_mass};

}  // namespace pkil::simd::neon
