#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qflow/diagnostics.hpp"
#include "qflow/geometry.hpp"
#include "qflow/operators.hpp"

namespace qflow {

// The flow integrated here acts on the conformal factor,
//   du/dt = lambda(t) f - Q_{g(t)},
// which corresponds to the metric-level evolution
//   dg/dt = -2 (Q_{g(t)} - lambda(t) f) g(t)   under   g = e^{2u} g_0
// (the factor-level form absorbs the 2). The multiplier is chosen to hold
// int f e^{nu} dmu fixed. Related variants from the literature -- the
// volume-normalized flow whose multiplier fixes int e^{nu} instead, and the
// abstract constrained-gradient flow on the Sobolev hypersurface -- are not
// implemented.

enum class Scheme { kExplicitRk4, kImexSemiImplicit };

/// Time-stepping configuration. The imex scheme treats m P0 u implicitly with
/// the frozen coefficient m = min_x e^{-nu}, iterating the preconditioned
/// fixed point to the backward-Euler solution; everything else is explicit.
/// dt adaptation: halve on an energy increase or a failed solve, grow by
/// `dt_growth` after `grow_after` clean steps, capped at dt_cap.
struct FlowConfig {
  Scheme scheme = Scheme::kImexSemiImplicit;
  double dt = 1e-2;
  bool adaptive_dt = true;
  double dt_min = 1e-10;
  double dt_cap = 0.25;
  double dt_growth = 1.2;
  int grow_after = 10;
  double projection_tol = 1e-12;  // relative, |int f e^{nu} - k_n| <= tol*max(1,|k_n|)
  double t_max = 100.0;
  double f2_stop = 1e-12;
  double rhs_l2_stop = 1e-8;
  int record_stride = 10;
  int snapshot_stride = 5;  // snapshots every this many records
  double sup_ceiling = 40.0;
  double hn2_ceiling = 1e3;
  double energy_slack = 1e-9;
  int h2k_order = 0;  // 0 -> use n (the H^n column)
  // When k_n = 0 the continuous flow conserves the volume exactly; the
  // discrete step only approximately. A constant shift restores it exactly
  // and commutes with the f-constraint (both sides scale by e^{nc} with
  // target 0), so it is applied after each projection unless disabled.
  bool renormalize_volume = true;
};

/// The evolving conformal factor together with its cached curvature and
/// multiplier. After every accepted step the constraint residual
/// |int f e^{nu} dmu - k_n| is within the projection tolerance and `q`
/// equals q_curvature(u).
///
/// `u_values` caches the collocation values of u and is carried through the
/// projection by the exact linear update u_grid + c f; re-deriving it by a
/// fresh transform would inject rounding noise above the conservation budget
/// on the larger grids, so the (spectral, grid) pair is the canonical state.
struct FlowState {
  double t = 0.0;
  SpectralField u;
  std::vector<double> u_values;
  double lambda = 0.0;
  GridField q;
  double last_dt = 0.0;
};

struct FlowStepRejected : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InfeasibleConstraint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// lambda(u) = int f Q dmu_g / int f^2 dmu_g. The numerator reduces to
/// int f (P0 u + Q0) dmu_0, evaluated exactly in spectral form.
double lambda_of(const SpectralField& u, const BackgroundData& bg);

/// Shift u along f so that int f e^{n(u + c f)} dmu = k_n, by safeguarded
/// Newton on the strictly increasing 1-D function. Throws
/// InfeasibleConstraint when no root exists (e.g. k_n > 0 but f <= 0).
SpectralField project_constraint(const SpectralField& u, const BackgroundData& bg,
                                 double rel_tol = 1e-12);

/// The 1-D shift c itself (for tests and the two-constraint solvers).
double projection_shift(const std::vector<double>& u_grid, const BackgroundData& bg,
                        double rel_tol);

/// lambda f - Q, pointwise.
GridField flow_rhs(const FlowState& state, const BackgroundData& bg);

/// Build a consistent state (cached Q and lambda) at time t from u.
FlowState make_state(const SpectralField& u, const BackgroundData& bg, double t = 0.0);

/// One time step of the selected scheme followed by the exact constraint
/// re-projection. Throws FlowStepRejected on exponent overflow or when the
/// semi-implicit iteration fails to converge within 50 sweeps.
FlowState step(const FlowState& state, const BackgroundData& bg, const FlowConfig& config);

enum class RunStatus { kConverged, kMaxTime, kBlowUp, kNumericalFailure };

struct RunResult {
  FlowState state;
  DiagnosticsSeries series;
  std::vector<std::pair<double, SpectralField>> snapshots;
  RunStatus status = RunStatus::kMaxTime;
  std::string message;
  std::optional<ConcentrationReport> concentration;
  // Controller state at exit, serialized into checkpoints so that a resumed
  // trajectory continues bit-exactly.
  double next_dt = 0.0;
  int next_streak = 0;
  double target_volume = 0.0;  // 0 when volume renormalization is inactive
};

/// Integrate from u0 (must already satisfy the constraint) until a stop
/// criterion fires: F2 <= f2_stop or ||rhs||_{L2} <= rhs_l2_stop (converged),
/// t >= t_max, or a blow-up ceiling is hit (reported with the concentration
/// diagnostic on the sphere, never clipped). Energy is non-increasing across
/// accepted steps up to `energy_slack`; violations trigger dt reduction.
/// `t0`, config.dt, `initial_streak` and `target_volume` seed the clock, the
/// adaptive-dt controller and the conserved volume when resuming from a
/// checkpoint (target_volume = 0 computes it from u0). `u0_grid`, when given,
/// restores the carried collocation values of a checkpointed state; otherwise
/// they are derived from u0 and the constraint is re-polished on that grid.
RunResult run_flow(const SpectralField& u0, const BackgroundData& bg,
                   const FlowConfig& config, double t0 = 0.0, int initial_streak = 0,
                   double target_volume = 0.0,
                   const std::vector<double>* u0_grid = nullptr);

/// Fixed-step explicit-RK4 slice with records every `dt`, for the identity
/// checks of the diagnostics module.
TrajectoryWindow record_fine_window(const SpectralField& u_start, const BackgroundData& bg,
                                    double dt, int n_records);

}  // namespace qflow
