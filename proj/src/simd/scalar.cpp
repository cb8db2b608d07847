#include "pkil/simd/kernels.hpp"

namespace pkil::simd::scalar {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double squared_norm(const double* a, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * a[i];
  return sum;
}

void scale_inplace(double* x, std::size_t n, double factor) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= factor;
}

void dot_rows(const double* rows, std::size_t n_rows, std::size_t dim, const double* query,
              double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot(rows + r * dim, query, dim);
}

void split_mass(const double* in, std::size_t n, double p, double* lo, double* hi) {
  const double q = 1.0 - p;
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = in[i] * q;
    hi[i] = in[i] * p;
  }
}

}  // namespace

const KernelTable kTable{&dot, &squared_norm, &scale_inplace, &dot_rows, &split_mass};

}  // namespace pkil::simd::scalar
