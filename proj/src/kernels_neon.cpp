// NEON variants for aarch64. Reductions use two independent vector
// accumulators folded in a fixed order. exp_scale stays scalar here: libm exp
// is already fast on aarch64 and keeping it scalar avoids a hand-rolled
// polynomial on a target this build cannot test natively.

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "qflow/kernels.hpp"

namespace qflow::kernels {

namespace {

// Branchless TwoSum per lane, matching the compensated scalar reductions.
struct CompAcc {
  float64x2_t sum = vdupq_n_f64(0.0);
  float64x2_t comp = vdupq_n_f64(0.0);
  inline void add(float64x2_t x) {
    const float64x2_t t = vaddq_f64(sum, x);
    const float64x2_t z = vsubq_f64(t, sum);
    const float64x2_t e =
        vaddq_f64(vsubq_f64(sum, vsubq_f64(t, z)), vsubq_f64(x, z));
    comp = vaddq_f64(comp, e);
    sum = t;
  }
};

inline void two_sum(double& sum, double& comp, double x) {
  const double t = sum + x;
  const double z = t - sum;
  comp += (sum - (t - z)) + (x - z);
  sum = t;
}

inline double reduce_comp(const CompAcc& acc, const double* tail_terms, std::size_t tail) {
  double sums[2], comps[2];
  vst1q_f64(sums, acc.sum);
  vst1q_f64(comps, acc.comp);
  double s = 0.0, c = 0.0;
  for (double v : sums) two_sum(s, c, v);
  for (double v : comps) two_sum(s, c, v);
  for (std::size_t i = 0; i < tail; ++i) two_sum(s, c, tail_terms[i]);
  return s + c;
}

double neon_dot(const double* a, const double* b, std::size_t n) {
  CompAcc acc;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc.add(vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  double tail[2];
  std::size_t t = 0;
  for (; i < n; ++i) tail[t++] = a[i] * b[i];
  return reduce_comp(acc, tail, t);
}

double neon_dot3(const double* a, const double* b, const double* c, std::size_t n) {
  CompAcc acc;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    acc.add(vmulq_f64(vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)), vld1q_f64(c + i)));
  double tail[2];
  std::size_t t = 0;
  for (; i < n; ++i) tail[t++] = a[i] * b[i] * c[i];
  return reduce_comp(acc, tail, t);
}

double neon_sum(const double* a, std::size_t n) {
  CompAcc acc;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc.add(vld1q_f64(a + i));
  double tail[2];
  std::size_t t = 0;
  for (; i < n; ++i) tail[t++] = a[i];
  return reduce_comp(acc, tail, t);
}

double neon_max_abs(const double* a, std::size_t n) {
  float64x2_t m = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) m = vmaxq_f64(m, vabsq_f64(vld1q_f64(a + i)));
  double r = vmaxvq_f64(m);
  for (; i < n; ++i) r = std::max(r, std::fabs(a[i]));
  return r;
}

void neon_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void neon_scale(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s * a[i];
}

void neon_axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const float64x2_t vb = vdupq_n_f64(beta);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t r = vmulq_f64(vb, vld1q_f64(y + i));
    r = vfmaq_f64(r, va, vld1q_f64(x + i));
    vst1q_f64(y + i, r);
  }
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void neon_exp_scale(const double* x, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(s * x[i]);
}

constexpr Ops kNeonOps = {
    "neon",        neon_dot,  neon_dot3,  neon_sum,
    neon_max_abs,  neon_mul,  neon_scale, neon_axpby,
    neon_exp_scale,
};

}  // namespace

const Ops* neon_ops() { return &kNeonOps; }

}  // namespace qflow::kernels
