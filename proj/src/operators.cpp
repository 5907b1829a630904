#include "qflow/operators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "qflow/kernels.hpp"

namespace qflow {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kIneqSlack = 1e-10;

double factorial(int m) {
  double r = 1.0;
  for (int i = 2; i <= m; ++i) r *= i;
  return r;
}

void check_same_geometry(const Geometry& a, const Geometry& b) {
  if (!a.same_as(b)) throw std::invalid_argument("geometry mismatch");
}

// Guard before exponentiating +-n*u: beyond this the double range is gone.
void check_exp_range(const std::vector<double>& u_grid, int n) {
  const double sup = kernels::active().max_abs(u_grid.data(), u_grid.size());
  if (static_cast<double>(n) * sup > 700.0)
    throw std::runtime_error("e^{n u} overflows double range (sup|u| too large)");
}

}  // namespace

GjmsMultiplier gjms_multiplier(std::shared_ptr<const Geometry> geom) {
  GjmsMultiplier op{geom, std::vector<double>(geom->mode_count(), 0.0),
                    std::numeric_limits<double>::infinity()};
  const int n = geom->dim();
  const auto& eig = geom->laplace_eigenvalues();
  for (std::size_t m = 0; m < op.mu.size(); ++m) {
    if (geom->kind() == GeomKind::kTorus) {
      op.mu[m] = std::pow(eig[m], n / 2);
    } else {
      double prod = 1.0;
      for (int k = 0; k < n / 2; ++k) prod *= eig[m] + static_cast<double>(k) * (n - 1 - k);
      op.mu[m] = prod;
    }
    if (eig[m] == 0.0) op.mu[m] = 0.0;  // kernel = constants, exactly
    if (op.mu[m] > 0.0) op.lambda1 = std::min(op.lambda1, op.mu[m]);
  }
  return op;
}

SpectralField apply_gjms(const GjmsMultiplier& op, const SpectralField& u) {
  check_same_geometry(*op.geom, *u.geom);
  SpectralField out{u.geom, std::vector<double>(u.coeffs.size())};
  kernels::active().mul(op.mu.data(), u.coeffs.data(), out.coeffs.data(), u.coeffs.size());
  return out;
}

GridField metric_q0(std::shared_ptr<const Geometry> geom) {
  const double v =
      geom->kind() == GeomKind::kZonalSphere ? factorial(geom->dim() - 1) : 0.0;
  return GridField{geom, std::vector<double>(geom->node_count(), v)};
}

BackgroundData make_background(std::shared_ptr<const Geometry> geom, const GridField& q0,
                               const GridField& f, bool synthetic) {
  check_same_geometry(*geom, *q0.geom);
  check_same_geometry(*geom, *f.geom);
  BackgroundData bg;
  bg.geom = geom;
  bg.op = gjms_multiplier(geom);
  bg.q0 = q0;
  bg.f = f;
  bg.q0_spec = to_spectral(q0);
  bg.f_spec = to_spectral(f);
  bg.k_n = integrate(q0);
  bg.synthetic_q0 = synthetic;
  const double f_sup = kernels::active().max_abs(f.values.data(), f.values.size());
  if (f_sup == 0.0) throw std::invalid_argument("curvature candidate f vanishes identically");
  bg.f_squared.resize(f.values.size());
  kernels::active().mul(f.values.data(), f.values.data(), bg.f_squared.data(),
                        f.values.size());
  bg.f_fine.resize(geom->fine_node_count());
  bg.q0_fine.resize(geom->fine_node_count());
  geom->to_fine_grid(bg.f_spec.coeffs.data(), bg.f_fine.data());
  geom->to_fine_grid(bg.q0_spec.coeffs.data(), bg.q0_fine.data());
  return bg;
}

GridField q_curvature(const SpectralField& u, const BackgroundData& bg) {
  check_same_geometry(*u.geom, *bg.geom);
  const std::size_t N = bg.geom->node_count();
  GridField u_grid = to_grid(u);
  check_exp_range(u_grid.values, bg.geom->dim());
  SpectralField pu = apply_gjms(bg.op, u);
  GridField out = to_grid(pu);
  const auto& k = kernels::active();
  std::vector<double> emnu(N);
  k.exp_scale(u_grid.values.data(), -static_cast<double>(bg.geom->dim()), emnu.data(), N);
  for (std::size_t i = 0; i < N; ++i)
    out.values[i] = emnu[i] * (out.values[i] + bg.q0.values[i]);
  return out;
}

double energy(const SpectralField& u, const BackgroundData& bg) {
  check_same_geometry(*u.geom, *bg.geom);
  const auto& k = kernels::active();
  const double n = bg.geom->dim();
  const double quad = k.dot3(bg.op.mu.data(), u.coeffs.data(), u.coeffs.data(),
                             u.coeffs.size());
  const double lin = k.dot(bg.q0_spec.coeffs.data(), u.coeffs.data(), u.coeffs.size());
  return 0.5 * n * quad + n * lin;
}

double sobolev_norm(const SpectralField& u, const GjmsMultiplier& op, double s) {
  check_same_geometry(*u.geom, *op.geom);
  const auto& k = kernels::active();
  const double l2 = k.dot(u.coeffs.data(), u.coeffs.data(), u.coeffs.size());
  const double half_n = 0.5 * op.geom->dim();
  double deriv = 0.0;
  if (s == half_n) {
    deriv = k.dot3(op.mu.data(), u.coeffs.data(), u.coeffs.data(), u.coeffs.size());
  } else if (s > 0.0 && s == std::floor(s) && static_cast<long>(s) % 2 == 0) {
    const auto& eig = op.geom->laplace_eigenvalues();
    for (std::size_t m = 0; m < u.coeffs.size(); ++m)
      deriv += std::pow(eig[m], s) * u.coeffs[m] * u.coeffs[m];
  } else {
    throw std::invalid_argument("unsupported Sobolev order (use n/2 or an even integer)");
  }
  return std::sqrt(deriv + l2);
}

double total_q(const SpectralField& u, const BackgroundData& bg) {
  check_same_geometry(*u.geom, *bg.geom);
  GridField pu = to_grid(apply_gjms(bg.op, u));
  const auto& k = kernels::active();
  return k.dot(bg.geom->weights().data(), pu.values.data(), pu.values.size()) + bg.k_n;
}

double sphere_area(int n) {
  switch (n) {
    case 2: return 4.0 * kPi;
    case 4: return 8.0 * kPi * kPi / 3.0;
    case 6: return 16.0 * kPi * kPi * kPi / 15.0;
    default: throw std::invalid_argument("sphere_area: n must be even, one of {2,4,6}");
  }
}

double threshold(int n) {
  if (n % 2 != 0) throw std::invalid_argument("threshold: n must be even");
  return factorial(n - 1) * sphere_area(n);
}

InequalityReport check_beckner(const SpectralField& u) {
  if (u.geom->kind() != GeomKind::kZonalSphere)
    throw std::invalid_argument("Beckner check is a sphere statement");
  const int n = u.geom->dim();
  BackgroundData bg = make_background(
      u.geom, metric_q0(u.geom),
      GridField{u.geom, std::vector<double>(u.geom->node_count(), 1.0)}, false);
  GridField ug = to_grid(u);
  check_exp_range(ug.values, n);
  std::vector<double> enu(ug.values.size());
  kernels::active().exp_scale(ug.values.data(), n, enu.data(), enu.size());
  const double vol_u =
      kernels::active().dot(u.geom->weights().data(), enu.data(), enu.size());
  InequalityReport rep;
  rep.check = "beckner";
  rep.left = vol_u / sphere_area(n);
  rep.right = std::exp(energy(u, bg) / threshold(n));
  rep.satisfied = rep.left <= rep.right + kIneqSlack;
  return rep;
}

InequalityReport estimate_adams_constant(std::shared_ptr<const Geometry> geom,
                                         int n_samples, unsigned long seed) {
  const GjmsMultiplier op = gjms_multiplier(geom);
  const int n = geom->dim();
  const double scale = factorial(n) * sphere_area(n) / 2.0;
  const auto& k = kernels::active();
  double worst = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    SpectralField u = random_state(geom, seed + static_cast<unsigned long>(s), 1.0);
    const double up0u = k.dot3(op.mu.data(), u.coeffs.data(), u.coeffs.data(),
                               u.coeffs.size());
    if (up0u < 1e-14) continue;
    GridField ug = to_grid(u);
    const double ubar = integrate(ug) / geom->volume();
    double lhs = 0.0;
    for (std::size_t i = 0; i < ug.values.size(); ++i) {
      const double d = ug.values[i] - ubar;
      lhs += geom->weights()[i] * std::exp(scale * d * d / up0u);
    }
    worst = std::max(worst, lhs);
  }
  InequalityReport rep;
  rep.check = "adams-constant-lower-bound";
  rep.left = worst;
  rep.right = std::numeric_limits<double>::infinity();  // C_A is unknown; never asserted
  rep.satisfied = true;
  rep.empirical_constant = worst;
  return rep;
}

void write_multiplier_csv(const GjmsMultiplier& op, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "mode,label,laplace_eigenvalue,mu\n";
  os.precision(17);
  const auto& eig = op.geom->laplace_eigenvalues();
  for (std::size_t m = 0; m < op.mu.size(); ++m)
    os << m << "," << op.geom->mode_label(m) << "," << eig[m] << "," << op.mu[m] << "\n";
}

}  // namespace qflow
