#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "qflow/geometry.hpp"
#include "qflow/operators.hpp"

namespace qflow {

/// Time series recorded along a run; one entry per record in each column.
/// volume[0] is the initial volume V0 used for the preservation check.
struct DiagnosticsSeries {
  std::vector<double> t;
  std::vector<double> energy;
  std::vector<double> f2;          // int (Q - lambda f)^2 dmu_g
  std::vector<double> constraint;  // int f e^{nu} dmu
  std::vector<double> volume;      // int e^{nu} dmu
  std::vector<double> hn2;         // H^{n/2} norm of u
  std::vector<double> h2k;         // H^{2k} norm for the configured order
  std::vector<double> sup_u;
  std::vector<double> lambda;
  std::vector<double> com_axis;    // center-of-mass axis component
  std::vector<double> tail_fraction;
  int h2k_order = 0;
  bool blow_up = false;

  std::size_t size() const { return t.size(); }
  void write_csv(std::ostream& os) const;
};

/// Fine-spaced trajectory slice with full field snapshots, for checking the
/// differential identities of the flow by finite differences.
struct TrajectoryWindow {
  double dt = 0.0;  // record spacing
  std::vector<double> t;
  std::vector<double> energy;
  std::vector<double> f2;
  std::vector<double> lambda;
  std::vector<SpectralField> u;
  std::vector<GridField> q;
};

/// Relative residuals of the three flow identities over a window:
///   dE/dt      = -n int (Q - lambda f)^2 dmu_g
///   dQ/dt      = -P_g (Q - lambda f) + n Q (Q - lambda f)
///   dlambda/dt = (int f^2 dmu_g)^{-1} int (P_g f - n lambda f^2)(lambda f - Q) dmu_g
/// Centered differences of the records against the closed forms, normalized
/// by the window's right-hand-side scale.
struct IdentityResiduals {
  double energy_identity = 0.0;
  double q_identity = 0.0;
  double lambda_identity = 0.0;
};

IdentityResiduals check_flow_identities(const TrajectoryWindow& window,
                                        const BackgroundData& bg,
                                        double max_record_dt = 1e-3);

enum class RateModel { kExponential, kPolynomial };

/// Least-squares decay-model fit of delta_i = ||u(t_i) - u(T_end)||, the
/// distances measured in H^{n/2} (the natural norm of the flow; the runner
/// uses the final recorded state as the stand-in limit and excludes the
/// self-distance tail): log delta vs t (exponential, delta ~ A e^{-rate t})
/// against log delta vs log(1+t) (polynomial, delta ~ B (1+t)^{-rate}); the
/// better R^2 wins, with a 0.005 dead-band preferring the polynomial model.
struct RateFit {
  RateModel model = RateModel::kPolynomial;
  double rate = 0.0;
  double r2 = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  int samples = 0;
};

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& delta);

/// Lojasiewicz-Simon exponent estimate: along the flow ||DE|| = sqrt(F2), so
/// regressing log sqrt(F2) against log(E - E_end) gives slope 1-theta.
struct LojasiewiczEstimate {
  double theta = 0.0;
  double r2 = 0.0;
  int samples = 0;
};

LojasiewiczEstimate estimate_lojasiewicz(const std::vector<double>& energy_gap,
                                         const std::vector<double>& f2);

/// Polar-cap mass fractions of e^{nu} at angular radii pi/16, pi/8, pi/4
/// about the heavier pole, with the discrete cap volume fractions as a
/// baseline. Flags when the smallest cap carries more than 90% of the mass
/// and the H^{n/2} norm exceeds the ceiling.
struct ConcentrationReport {
  std::array<double, 3> cap_mass_fraction{};
  std::array<double, 3> cap_volume_fraction{};
  Pole pole = Pole::kNorth;
  double com_axis = 0.0;
  double hn2 = 0.0;
  bool flag = false;
};

ConcentrationReport detect_concentration(const SpectralField& u, double hn2_ceiling = 10.0);

}  // namespace qflow
