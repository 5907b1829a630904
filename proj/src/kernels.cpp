#include "qflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace qflow::kernels {

namespace {

// Reductions are compensated (branchless TwoSum): the conservation checks sit
// at 1e-12 absolute on integrals of magnitude ~1e2 over 1e5 nodes, where plain
// accumulation noise alone would blow the budget.
inline void two_sum(double& sum, double& comp, double x) {
  const double t = sum + x;
  const double z = t - sum;
  comp += (sum - (t - z)) + (x - z);
  sum = t;
}

double scalar_dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) two_sum(sum, comp, a[i] * b[i]);
  return sum + comp;
}

double scalar_dot3(const double* a, const double* b, const double* c, std::size_t n) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) two_sum(sum, comp, a[i] * b[i] * c[i]);
  return sum + comp;
}

double scalar_sum(const double* a, std::size_t n) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) two_sum(sum, comp, a[i]);
  return sum + comp;
}

double scalar_max_abs(const double* a, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

void scalar_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scalar_scale(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s * a[i];
}

void scalar_axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void scalar_exp_scale(const double* x, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(s * x[i]);
}

constexpr Ops kScalarOps = {
    "scalar",    scalar_dot,   scalar_dot3,  scalar_sum,
    scalar_max_abs, scalar_mul, scalar_scale, scalar_axpby,
    scalar_exp_scale,
};

const Ops* pick_active() {
  std::vector<const Ops*> avail = available();
  const char* env = std::getenv("QFLOW_KERNELS");
  if (env != nullptr && *env != '\0') {
    for (const Ops* ops : avail)
      if (std::strcmp(ops->name, env) == 0) return ops;
    // Unknown or unsupported request falls back to the widest variant.
  }
  return avail.back();
}

}  // namespace

const Ops& scalar() { return kScalarOps; }

#if defined(QFLOW_HAVE_AVX2)
const Ops* avx2_ops_if_supported();  // kernels_avx2.cpp
#endif
#if defined(QFLOW_HAVE_NEON)
const Ops* neon_ops();  // kernels_neon.cpp
#endif

std::vector<const Ops*> available() {
  std::vector<const Ops*> v{&kScalarOps};
#if defined(QFLOW_HAVE_AVX2)
  if (const Ops* ops = avx2_ops_if_supported()) v.push_back(ops);
#endif
#if defined(QFLOW_HAVE_NEON)
  v.push_back(neon_ops());
#endif
  return v;
}

const Ops& active() {
  static const Ops* selected = pick_active();
  return *selected;
}

}  // namespace qflow::kernels
