// AVX2+FMA variants of the inner-loop kernels. Reductions use four independent
// vector accumulators folded in a fixed order, so results are deterministic
// (though they may differ from the scalar variant at the last few ulp).

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "qflow/kernels.hpp"

namespace qflow::kernels {

namespace {

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

// Branchless TwoSum accumulator per lane; reductions stay compensated so the
// conservation budget (1e-12 absolute at ~1e5 nodes) survives accumulation.
struct CompAcc {
  __m256d sum = _mm256_setzero_pd();
  __m256d comp = _mm256_setzero_pd();
  inline void add(__m256d x) {
    const __m256d t = _mm256_add_pd(sum, x);
    const __m256d z = _mm256_sub_pd(t, sum);
    const __m256d e = _mm256_add_pd(_mm256_sub_pd(sum, _mm256_sub_pd(t, z)),
                                    _mm256_sub_pd(x, z));
    comp = _mm256_add_pd(comp, e);
    sum = t;
  }
  inline void finish(double* sums, double* comps) const {
    _mm256_storeu_pd(sums, sum);
    _mm256_storeu_pd(comps, comp);
  }
};

inline void two_sum(double& sum, double& comp, double x) {
  const double t = sum + x;
  const double z = t - sum;
  comp += (sum - (t - z)) + (x - z);
  sum = t;
}

inline double reduce_comp(const CompAcc& acc, const double* tail_terms, std::size_t tail) {
  double sums[4], comps[4];
  acc.finish(sums, comps);
  double s = 0.0, c = 0.0;
  for (double v : sums) two_sum(s, c, v);
  for (double v : comps) two_sum(s, c, v);
  for (std::size_t i = 0; i < tail; ++i) two_sum(s, c, tail_terms[i]);
  return s + c;
}

double avx2_dot(const double* a, const double* b, std::size_t n) {
  CompAcc acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc.add(_mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double tail[4];
  std::size_t t = 0;
  for (; i < n; ++i) tail[t++] = a[i] * b[i];
  return reduce_comp(acc, tail, t);
}

double avx2_dot3(const double* a, const double* b, const double* c, std::size_t n) {
  CompAcc acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ab = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc.add(_mm256_mul_pd(ab, _mm256_loadu_pd(c + i)));
  }
  double tail[4];
  std::size_t t = 0;
  for (; i < n; ++i) tail[t++] = a[i] * b[i] * c[i];
  return reduce_comp(acc, tail, t);
}

double avx2_sum(const double* a, std::size_t n) {
  CompAcc acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc.add(_mm256_loadu_pd(a + i));
  double tail[4];
  std::size_t t = 0;
  for (; i < n; ++i) tail[t++] = a[i];
  return reduce_comp(acc, tail, t);
}

double avx2_max_abs(const double* a, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    m = _mm256_max_pd(m, _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(a + i)));
  double r = hmax(m);
  for (; i < n; ++i) r = std::max(r, std::fabs(a[i]));
  return r;
}

void avx2_mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void avx2_scale(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] = s * a[i];
}

void avx2_axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), r);
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

// exp via the classic rational minimax on [-ln2/2, ln2/2] plus exact 2^k
// scaling (Cephes coefficients). Accurate to ~1 ulp for |x| <= 708; lanes are
// range-checked and the whole block falls back to std::exp if any lane is out
// of the safe exponent window.
constexpr double kLog2E = 1.4426950408889634073599;
constexpr double kC1 = 6.93145751953125e-1;
constexpr double kC2 = 1.42860682030941723212e-6;
constexpr double kP0 = 1.26177193074810590878e-4;
constexpr double kP1 = 3.02994407707441961300e-2;
constexpr double kP2 = 9.99999999999999999910e-1;
constexpr double kQ0 = 3.00198505138664455042e-6;
constexpr double kQ1 = 2.52448340349684104192e-3;
constexpr double kQ2 = 2.27265548208155028766e-1;
constexpr double kQ3 = 2.00000000000000000005e0;

inline __m256d exp4(__m256d x) {
  const __m256d k = _mm256_round_pd(
      _mm256_fmadd_pd(_mm256_set1_pd(kLog2E), x, _mm256_set1_pd(0.5)),
      _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(k, _mm256_set1_pd(kC1), x);
  x = _mm256_fnmadd_pd(k, _mm256_set1_pd(kC2), x);
  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d p = _mm256_fmadd_pd(_mm256_set1_pd(kP0), xx, _mm256_set1_pd(kP1));
  p = _mm256_fmadd_pd(p, xx, _mm256_set1_pd(kP2));
  p = _mm256_mul_pd(p, x);
  __m256d q = _mm256_fmadd_pd(_mm256_set1_pd(kQ0), xx, _mm256_set1_pd(kQ1));
  q = _mm256_fmadd_pd(q, xx, _mm256_set1_pd(kQ2));
  q = _mm256_fmadd_pd(q, xx, _mm256_set1_pd(kQ3));
  __m256d r = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));
  // 2^k via exponent bits; k is within [-1022, 1023] for |x| <= 708.
  const __m128i ki = _mm256_cvtpd_epi32(k);
  const __m256i ke = _mm256_cvtepi32_epi64(ki);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ke, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(bits));
}

void avx2_exp_scale(const double* x, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  const __m256d lim = _mm256_set1_pd(700.0);
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(vs, _mm256_loadu_pd(x + i));
    const __m256d big = _mm256_cmp_pd(_mm256_andnot_pd(sign_mask, t), lim, _CMP_GT_OQ);
    if (_mm256_movemask_pd(big) != 0) {
      for (std::size_t j = i; j < i + 4; ++j) out[j] = std::exp(s * x[j]);
      continue;
    }
    _mm256_storeu_pd(out + i, exp4(t));
  }
  for (; i < n; ++i) out[i] = std::exp(s * x[i]);
}

constexpr Ops kAvx2Ops = {
    "avx2",        avx2_dot,  avx2_dot3,  avx2_sum,
    avx2_max_abs,  avx2_mul,  avx2_scale, avx2_axpby,
    avx2_exp_scale,
};

}  // namespace

const Ops* avx2_ops_if_supported() {
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2Ops;
  return nullptr;
}

}  // namespace qflow::kernels
