#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qflow/geometry.hpp"

namespace qflow {

/// Diagonal spectral representation of the GJMS operator P0 of order n.
/// Multipliers per mode:
///   torus:  |k|^n            (flat metric, P0 = (-Laplace)^{n/2})
///   sphere: prod_{k=0}^{n/2-1} ( l(l+n-1) + k(n-1-k) )
/// The kernel is exactly the constant mode; lambda1 is the smallest strictly
/// positive multiplier.
struct GjmsMultiplier {
  std::shared_ptr<const Geometry> geom;
  std::vector<double> mu;  // one per mode, mu[0] == 0
  double lambda1 = 0.0;
};

GjmsMultiplier gjms_multiplier(std::shared_ptr<const Geometry> geom);

/// Coefficient-wise application of P0.
SpectralField apply_gjms(const GjmsMultiplier& op, const SpectralField& u);

/// Background data of a prescription problem: the metric (or synthetic)
/// Q-curvature Q0, the candidate curvature f, and the conserved total
/// k_n = int Q0 dmu which is also the constraint target for int f e^{nu} dmu.
/// Both fields are band-limited by construction, so the grid and spectral
/// representations stored here agree exactly.
struct BackgroundData {
  std::shared_ptr<const Geometry> geom;
  GjmsMultiplier op;
  GridField q0;
  SpectralField q0_spec;
  GridField f;
  SpectralField f_spec;
  std::vector<double> f_squared;  // pointwise f^2, reused in quadratures
  std::vector<double> f_fine;     // f on the dealiased grid
  std::vector<double> q0_fine;    // Q0 on the dealiased grid
  double k_n = 0.0;
  bool synthetic_q0 = false;  // Q0 overrides the metric value (torus only)
};

/// Assembles a background from band-limited fields. Throws if f vanishes
/// identically. `synthetic` tags runs whose Q0 is not the metric one.
BackgroundData make_background(std::shared_ptr<const Geometry> geom, const GridField& q0,
                               const GridField& f, bool synthetic);

/// The metric Q-curvature of the model space: 0 on the flat torus and the
/// constant (n-1)! on the round sphere.
GridField metric_q0(std::shared_ptr<const Geometry> geom);

/// Q_{g_u} = e^{-nu} (P0 u + Q0), evaluated pointwise on the grid.
/// Throws on exponent overflow (n sup|u| too large for double range).
GridField q_curvature(const SpectralField& u, const BackgroundData& bg);

/// E[u] = (n/2) int u P0 u dmu + n int Q0 u dmu  (spectral quadratic form
/// plus a Parseval-exact linear term).
double energy(const SpectralField& u, const BackgroundData& bg);

/// Sobolev norms: s = n/2 selects the operator form
/// sqrt( int u P0 u + int u^2 ); an even integer s selects the Laplacian form
/// sqrt( int |(-Laplace)^{s/2} u|^2 + int u^2 ). Other orders are unsupported.
double sobolev_norm(const SpectralField& u, const GjmsMultiplier& op, double s);

/// Total curvature of g_u: int (P0 u + Q0) dmu, independent of u.
double total_q(const SpectralField& u, const BackgroundData& bg);

/// Critical total curvature (n-1)! omega_n.
double threshold(int n);
double sphere_area(int n);  // omega_n

/// One inequality evaluation: satisfied iff left <= right + 1e-10.
/// `empirical_constant` carries the sampled constant for the Adams-type
/// estimate (which is never asserted against a specific constant).
struct InequalityReport {
  std::string check;
  double left = 0.0;
  double right = 0.0;
  bool satisfied = false;
  double empirical_constant = 0.0;
};

/// (1/omega_n) int e^{nu} dmu <= exp( E[u] / ((n-1)! omega_n) ) on the round
/// sphere (metric background). Zonal sphere only.
InequalityReport check_beckner(const SpectralField& u);

/// Samples random states to produce an empirical lower bound for the constant
/// in int exp( (n! omega_n / 2) (u-ubar)^2 / int u P0 u ) dmu <= C_A.
InequalityReport estimate_adams_constant(std::shared_ptr<const Geometry> geom,
                                         int n_samples, unsigned long seed);

/// CSV export of the multiplier table (mode index, label, eigenvalue of
/// -Laplace, mu).
void write_multiplier_csv(const GjmsMultiplier& op, const std::string& path);

}  // namespace qflow
