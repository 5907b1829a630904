#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace qflow::kernels {

/// Dispatch table for the arithmetic inner loops shared by the whole solver:
/// quadrature reductions, pointwise exponentials of the conformal factor, and
/// coefficient-wise products in spectral space. A scalar reference variant
/// always exists; SIMD variants (AVX2 on x86-64, NEON on aarch64) are selected
/// once at startup when the CPU supports them. Every variant is deterministic:
/// the reduction order is fixed per variant, so results are bit-reproducible
/// for a fixed binary, machine and QFLOW_KERNELS setting.
struct Ops {
  const char* name;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]*b[i]*c[i]
  double (*dot3)(const double* a, const double* b, const double* c, std::size_t n);
  // sum_i a[i]
  double (*sum)(const double* a, std::size_t n);
  // max_i |a[i]|
  double (*max_abs)(const double* a, std::size_t n);
  // out[i] = a[i]*b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = s*a[i]
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // y[i] = alpha*x[i] + beta*y[i]
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  // out[i] = exp(s*x[i]); caller guarantees |s*x[i]| <= 708
  void (*exp_scale)(const double* x, double s, double* out, std::size_t n);
};

/// The variant selected for this process. Selection order: the QFLOW_KERNELS
/// environment variable ("scalar", "avx2", "neon") if set and available,
/// otherwise the widest variant the CPU supports.
const Ops& active();

/// The scalar reference variant (always available).
const Ops& scalar();

/// All variants compiled in and usable on this CPU, scalar first.
std::vector<const Ops*> available();

}  // namespace qflow::kernels
