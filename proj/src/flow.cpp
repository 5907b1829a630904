#include "qflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qflow/kernels.hpp"

namespace qflow {

namespace {

constexpr double kExpGuard = 700.0;   // beyond this e^{nu} leaves double range
constexpr double kImexTol = 1e-13;    // inner fixed-point tolerance (relative)
constexpr int kImexMaxSweeps = 50;

struct Eval {
  SpectralField pu;            // P0 u, spectral
  std::vector<double> u_grid;  // u at the quadrature nodes
  std::vector<double> enu;     // e^{nu} at the nodes
  double lambda = 0.0;
  SpectralField rhs_spec;      // dealiased projection of lambda f - Q
  double sup_u = 0.0;
};

Eval evaluate(const SpectralField& u, const BackgroundData& bg,
              const std::vector<double>* grid_in = nullptr) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const double n = g.dim();
  Eval e;
  e.pu = apply_gjms(bg.op, u);
  if (grid_in != nullptr) {
    e.u_grid = *grid_in;
  } else {
    e.u_grid.resize(g.node_count());
    g.to_grid(u.coeffs.data(), e.u_grid.data());
  }
  e.sup_u = k.max_abs(e.u_grid.data(), e.u_grid.size());
  if (n * e.sup_u > kExpGuard)
    throw FlowStepRejected("e^{n sup|u|} overflows double range");
  e.enu.resize(e.u_grid.size());
  k.exp_scale(e.u_grid.data(), n, e.enu.data(), e.enu.size());

  // lambda = int f Q dmu_g / int f^2 dmu_g; the numerator collapses to
  // int f (P0 u + Q0) dmu_0, exact in spectral form for band-limited f.
  const std::size_t M = g.mode_count();
  const double num = k.dot(bg.f_spec.coeffs.data(), e.pu.coeffs.data(), M) +
                     k.dot(bg.f_spec.coeffs.data(), bg.q0_spec.coeffs.data(), M);
  const double den =
      k.dot3(g.weights().data(), bg.f_squared.data(), e.enu.data(), e.enu.size());
  if (!(den > 1e-300))
    throw std::runtime_error("degenerate candidate: int f^2 e^{nu} dmu underflows");
  e.lambda = num / den;

  // Dealiased right-hand side: evaluate lambda f - e^{-nu}(P0 u + Q0) on the
  // fine grid and project back into the band.
  const std::size_t nf = g.fine_node_count();
  std::vector<double> uf(nf), pf(nf), emf(nf);
  g.to_fine_grid(u.coeffs.data(), uf.data());
  g.to_fine_grid(e.pu.coeffs.data(), pf.data());
  if (n * k.max_abs(uf.data(), nf) > kExpGuard)
    throw FlowStepRejected("e^{n sup|u|} overflows double range (fine grid)");
  k.exp_scale(uf.data(), -n, emf.data(), nf);
  std::vector<double> rf(nf);
  for (std::size_t i = 0; i < nf; ++i)
    rf[i] = e.lambda * bg.f_fine[i] - emf[i] * (pf[i] + bg.q0_fine[i]);
  e.rhs_spec = SpectralField{u.geom, std::vector<double>(M)};
  g.fine_to_spectral(rf.data(), e.rhs_spec.coeffs.data());
  return e;
}

GridField q_grid_from(const Eval& e, const BackgroundData& bg) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  GridField q{bg.geom, std::vector<double>(g.node_count())};
  g.to_grid(e.pu.coeffs.data(), q.values.data());
  std::vector<double> emnu(g.node_count());
  k.exp_scale(e.u_grid.data(), -static_cast<double>(g.dim()), emnu.data(), emnu.size());
  for (std::size_t i = 0; i < q.values.size(); ++i)
    q.values[i] = emnu[i] * (q.values[i] + bg.q0.values[i]);
  return q;
}

struct Outcome {
  FlowState state;
  Eval eval;
  double energy_value = 0.0;
  double f2 = 0.0;
  double rhs_l2 = 0.0;
  double volume = 0.0;
  double constraint = 0.0;
};

Outcome make_outcome(SpectralField u, const BackgroundData& bg, double t, double last_dt,
                     const std::vector<double>* grid_in = nullptr) {
  Outcome o;
  o.eval = evaluate(u, bg, grid_in);
  GridField q = q_grid_from(o.eval, bg);
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  std::vector<double> dev(N), dev_enu(N);
  for (std::size_t i = 0; i < N; ++i) dev[i] = q.values[i] - o.eval.lambda * bg.f.values[i];
  k.mul(dev.data(), o.eval.enu.data(), dev_enu.data(), N);
  o.f2 = k.dot3(g.weights().data(), dev.data(), dev_enu.data(), N);
  o.rhs_l2 = std::sqrt(k.dot3(g.weights().data(), dev.data(), dev.data(), N));
  o.volume = k.dot(g.weights().data(), o.eval.enu.data(), N);
  o.constraint = k.dot3(g.weights().data(), bg.f.values.data(), o.eval.enu.data(), N);
  o.energy_value = energy(u, bg);
  o.state = FlowState{t, std::move(u), o.eval.u_grid, o.eval.lambda, std::move(q), last_dt};
  return o;
}

SpectralField axpy_field(const SpectralField& u, double a, const SpectralField& x) {
  SpectralField out = u;
  kernels::active().axpby(a, x.coeffs.data(), 1.0, out.coeffs.data(), out.coeffs.size());
  return out;
}

// k_n below this is the conserved-volume regime of the zero-total-curvature
// case (synthetic zero-mean backgrounds land at rounding level, not 0).
constexpr double kZeroTotalCurvature = 1e-13;

Outcome advance(const Outcome& cur, const BackgroundData& bg, const FlowConfig& cfg,
                double dt, double target_volume) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t M = g.mode_count();
  const SpectralField& u = cur.state.u;
  SpectralField u_new{u.geom, std::vector<double>(M)};

  if (cfg.scheme == Scheme::kExplicitRk4) {
    const SpectralField& k1 = cur.eval.rhs_spec;
    Eval e2 = evaluate(axpy_field(u, 0.5 * dt, k1), bg);
    Eval e3 = evaluate(axpy_field(u, 0.5 * dt, e2.rhs_spec), bg);
    Eval e4 = evaluate(axpy_field(u, dt, e3.rhs_spec), bg);
    for (std::size_t m = 0; m < M; ++m)
      u_new.coeffs[m] = u.coeffs[m] +
                        dt / 6.0 *
                            (k1.coeffs[m] + 2.0 * e2.rhs_spec.coeffs[m] +
                             2.0 * e3.rhs_spec.coeffs[m] + e4.rhs_spec.coeffs[m]);
  } else {
    // Frozen-coefficient splitting: m P0 treated implicitly (diagonal in
    // spectral space), remainder explicit; sweep to the backward-Euler fixed
    // point u_new = u + dt (lambda f - Q)(u_new). The explicit remainder
    // (e^{-nu} - m) P0 makes the plain sweep oscillatory on stiff modes once
    // e^{nu} varies by more than 2x; a per-mode damped update with
    //   omega_m = 2 / (2 + gamma s_m),  s_m = dt m mu_m / (1 + dt m mu_m),
    //   gamma = max e^{nu} / min e^{nu} - 1,
    // keeps every mode contractive at any dt while leaving the benign modes
    // essentially undamped.
    double enu_min = cur.eval.enu[0], enu_max = cur.eval.enu[0];
    for (double v : cur.eval.enu) {
      enu_min = std::min(enu_min, v);
      enu_max = std::max(enu_max, v);
    }
    const double m_coef = 1.0 / enu_max;  // min e^{-nu}
    const double gamma = enu_max / enu_min - 1.0;
    const auto& mu = bg.op.mu;
    std::vector<double> v = u.coeffs;
    const Eval* e = &cur.eval;
    Eval e_own;
    bool converged = false;
    for (int sweep = 0; sweep < kImexMaxSweeps; ++sweep) {
      double diff2 = 0.0, norm2 = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double impl = dt * m_coef * mu[m];
        const double w =
            (u.coeffs[m] + dt * e->rhs_spec.coeffs[m] + impl * v[m]) / (1.0 + impl);
        const double omega = 2.0 / (2.0 + gamma * impl / (1.0 + impl));
        const double w_damped = v[m] + omega * (w - v[m]);
        const double d = w_damped - v[m];
        diff2 += d * d;
        norm2 += w_damped * w_damped;
        u_new.coeffs[m] = w_damped;
      }
      v = u_new.coeffs;
      if (std::sqrt(diff2) <= kImexTol * std::max(1.0, std::sqrt(norm2))) {
        converged = true;
        break;
      }
      e_own = evaluate(SpectralField{u.geom, v}, bg);
      e = &e_own;
    }
    if (!converged)
      throw FlowStepRejected("semi-implicit solve failed to converge in 50 sweeps");
  }

  // The projection and the volume renormalization update the collocation
  // values linearly alongside the coefficients; the pair stays the canonical
  // state (a fresh transform would re-introduce rounding-level constraint
  // drift on large grids).
  std::vector<double> grid_new(g.node_count());
  g.to_grid(u_new.coeffs.data(), grid_new.data());
  const double c = projection_shift(grid_new, bg, cfg.projection_tol);
  if (c != 0.0) {
    k.axpby(c, bg.f_spec.coeffs.data(), 1.0, u_new.coeffs.data(), M);
    k.axpby(c, bg.f.values.data(), 1.0, grid_new.data(), grid_new.size());
  }
  if (target_volume > 0.0) {
    const double n = g.dim();
    if (n * k.max_abs(grid_new.data(), grid_new.size()) > 700.0)
      throw FlowStepRejected("e^{n sup|u|} overflows double range");
    std::vector<double> enu(grid_new.size());
    k.exp_scale(grid_new.data(), n, enu.data(), enu.size());
    const double vol = k.dot(g.weights().data(), enu.data(), enu.size());
    const double c_vol = std::log(target_volume / vol) / n;
    u_new.coeffs[0] += c_vol * std::sqrt(g.volume());
    for (double& v : grid_new) v += c_vol;
  }
  return make_outcome(std::move(u_new), bg, cur.state.t + dt, dt, &grid_new);
}

int resolved_h2k_order(const FlowConfig& cfg, int n) {
  return cfg.h2k_order > 0 ? cfg.h2k_order : n;
}

void push_record(DiagnosticsSeries& s, const Outcome& o, const BackgroundData& bg,
                 int h2k_order) {
  const int n = bg.geom->dim();
  s.t.push_back(o.state.t);
  s.energy.push_back(o.energy_value);
  s.f2.push_back(o.f2);
  s.constraint.push_back(o.constraint);
  s.volume.push_back(o.volume);
  s.hn2.push_back(sobolev_norm(o.state.u, bg.op, 0.5 * n));
  s.h2k.push_back(sobolev_norm(o.state.u, bg.op, h2k_order));
  s.sup_u.push_back(o.eval.sup_u);
  s.lambda.push_back(o.state.lambda);
  s.com_axis.push_back(center_of_mass(GridField{bg.geom, o.eval.u_grid})[0]);
  s.tail_fraction.push_back(spectral_tail_fraction(o.state.u));
}

}  // namespace

double lambda_of(const SpectralField& u, const BackgroundData& bg) {
  return evaluate(u, bg).lambda;
}

double projection_shift(const std::vector<double>& u_grid, const BackgroundData& bg,
                        double rel_tol) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  const double n = g.dim();
  const double scale = std::max(1.0, std::fabs(bg.k_n));
  const double target = 0.25 * rel_tol * scale;

  std::vector<double> shifted(N), enu(N);
  auto g_and_slope = [&](double c, double* slope) {
    for (std::size_t i = 0; i < N; ++i) shifted[i] = u_grid[i] + c * bg.f.values[i];
    if (n * k.max_abs(shifted.data(), N) > kExpGuard)
      return c > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    k.exp_scale(shifted.data(), n, enu.data(), N);
    if (slope != nullptr)
      *slope = n * k.dot3(g.weights().data(), bg.f_squared.data(), enu.data(), N);
    return k.dot3(g.weights().data(), bg.f.values.data(), enu.data(), N) - bg.k_n;
  };

  double g0 = g_and_slope(0.0, nullptr);
  if (std::fabs(g0) <= target) return 0.0;

  // G is strictly increasing in c; bracket the root by doubling.
  const double f_sup = k.max_abs(bg.f.values.data(), N);
  const double c_cap = (kExpGuard + 10.0) / (n * f_sup);
  double lo, hi, g_lo, g_hi;
  double h = 1.0 / (n * f_sup);
  if (g0 > 0.0) {
    hi = 0.0;
    g_hi = g0;
    lo = -h;
    while ((g_lo = g_and_slope(lo, nullptr)) > 0.0) {
      hi = lo;
      g_hi = g_lo;
      lo *= 2.0;
      if (lo < -c_cap) throw InfeasibleConstraint("no root: int f e^{nu} cannot reach k_n");
    }
  } else {
    lo = 0.0;
    g_lo = g0;
    hi = h;
    while ((g_hi = g_and_slope(hi, nullptr)) < 0.0) {
      lo = hi;
      g_lo = g_hi;
      hi *= 2.0;
      if (hi > c_cap) throw InfeasibleConstraint("no root: int f e^{nu} cannot reach k_n");
    }
  }

  // Safeguarded Newton within [lo, hi].
  double c = std::fabs(g_lo) < std::fabs(g_hi) ? lo : hi;
  for (int it = 0; it < 200; ++it) {
    double slope = 0.0;
    const double gc = g_and_slope(c, &slope);
    if (std::fabs(gc) <= target) return c;
    if (gc > 0.0)
      hi = c;
    else
      lo = c;
    double c_next = slope > 0.0 ? c - gc / slope : 0.5 * (lo + hi);
    if (!(c_next > lo) || !(c_next < hi)) c_next = 0.5 * (lo + hi);
    if (c_next == c) break;
    c = c_next;
  }
  const double g_final = g_and_slope(c, nullptr);
  if (std::fabs(g_final) <= rel_tol * scale) return c;
  throw FlowStepRejected("constraint projection stalled above tolerance");
}

SpectralField project_constraint(const SpectralField& u, const BackgroundData& bg,
                                 double rel_tol) {
  if (!u.geom->same_as(*bg.geom)) throw std::invalid_argument("geometry mismatch");
  std::vector<double> u_grid(bg.geom->node_count());
  bg.geom->to_grid(u.coeffs.data(), u_grid.data());
  const double c = projection_shift(u_grid, bg, rel_tol);
  if (c == 0.0) return u;
  return axpy_field(u, c, bg.f_spec);
}

GridField flow_rhs(const FlowState& state, const BackgroundData& bg) {
  GridField out{bg.geom, std::vector<double>(bg.geom->node_count())};
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = state.lambda * bg.f.values[i] - state.q.values[i];
  return out;
}

FlowState make_state(const SpectralField& u, const BackgroundData& bg, double t) {
  return make_outcome(u, bg, t, 0.0).state;
}

FlowState step(const FlowState& state, const BackgroundData& bg, const FlowConfig& config) {
  const std::vector<double>* grid =
      state.u_values.size() == bg.geom->node_count() ? &state.u_values : nullptr;
  Outcome cur = make_outcome(state.u, bg, state.t, state.last_dt, grid);
  const double tv = config.renormalize_volume && std::fabs(bg.k_n) < kZeroTotalCurvature
                        ? cur.volume
                        : 0.0;
  return advance(cur, bg, config, config.dt, tv).state;
}

RunResult run_flow(const SpectralField& u0, const BackgroundData& bg,
                   const FlowConfig& cfg, double t0, int initial_streak,
                   double target_volume, const std::vector<double>* u0_grid) {
  RunResult res;
  const int h2k_order = resolved_h2k_order(cfg, bg.geom->dim());
  res.series.h2k_order = h2k_order;
  const double cons_scale = std::max(1.0, std::fabs(bg.k_n));

  SpectralField u_start = u0;
  std::vector<double> grid0;
  if (u0_grid != nullptr) {
    if (u0_grid->size() != bg.geom->node_count())
      throw std::invalid_argument("restored grid state has the wrong node count");
    grid0 = *u0_grid;
  } else {
    // Derive the collocation values and re-polish the constraint on them, so
    // that record 0 meets the same budget as every later record.
    grid0.resize(bg.geom->node_count());
    bg.geom->to_grid(u_start.coeffs.data(), grid0.data());
    std::vector<double> enu(grid0.size());
    kernels::active().exp_scale(grid0.data(), bg.geom->dim(), enu.data(), enu.size());
    const double g0 = kernels::active().dot3(bg.geom->weights().data(),
                                             bg.f.values.data(), enu.data(), enu.size()) -
                      bg.k_n;
    if (std::fabs(g0) > cfg.projection_tol * cons_scale)
      throw std::invalid_argument("u0 does not satisfy the constraint int f e^{nu} = k_n");
    const double c0 = projection_shift(grid0, bg, cfg.projection_tol);
    if (c0 != 0.0) {
      kernels::active().axpby(c0, bg.f_spec.coeffs.data(), 1.0, u_start.coeffs.data(),
                              u_start.coeffs.size());
      kernels::active().axpby(c0, bg.f.values.data(), 1.0, grid0.data(), grid0.size());
    }
  }

  Outcome cur = make_outcome(std::move(u_start), bg, t0, 0.0, &grid0);

  const double tv = cfg.renormalize_volume && std::fabs(bg.k_n) < kZeroTotalCurvature
                        ? (target_volume > 0.0 ? target_volume : cur.volume)
                        : 0.0;
  res.target_volume = tv;

  double dt = cfg.dt;
  int streak = initial_streak;
  long accepted = 0;
  long last_recorded = -1;
  int records = 0;

  auto record = [&](const Outcome& o) {
    push_record(res.series, o, bg, h2k_order);
    if (records % std::max(1, cfg.snapshot_stride) == 0)
      res.snapshots.emplace_back(o.state.t, o.state.u);
    ++records;
    last_recorded = accepted;
  };
  record(cur);

  while (true) {
    if (cur.f2 <= cfg.f2_stop || cur.rhs_l2 <= cfg.rhs_l2_stop) {
      res.status = RunStatus::kConverged;
      break;
    }
    if (cur.eval.sup_u > cfg.sup_ceiling ||
        sobolev_norm(cur.state.u, bg.op, 0.5 * bg.geom->dim()) > cfg.hn2_ceiling) {
      res.status = RunStatus::kBlowUp;
      res.message = "blow-up ceiling reached";
      res.series.blow_up = true;
      if (bg.geom->kind() == GeomKind::kZonalSphere)
        res.concentration = detect_concentration(cur.state.u, cfg.hn2_ceiling);
      break;
    }
    if (cur.state.t >= cfg.t_max) {
      res.status = RunStatus::kMaxTime;
      res.message = "t_max reached before convergence";
      break;
    }

    bool stepped = false;
    int tries = 0;
    Outcome next;
    while (!stepped) {
      bool ok = true;
      std::string why;
      try {
        next = advance(cur, bg, cfg, dt, tv);
      } catch (const FlowStepRejected& e) {
        ok = false;
        why = e.what();
      }
      if (ok && (!cfg.adaptive_dt ||
                 next.energy_value <= cur.energy_value + cfg.energy_slack)) {
        stepped = true;
        break;
      }
      if (!cfg.adaptive_dt) {
        res.status = RunStatus::kNumericalFailure;
        res.message = ok ? "energy increase with fixed dt" : why;
        if (last_recorded != accepted) record(cur);
        res.state = cur.state;
        res.next_dt = dt;
        res.next_streak = streak;
        return res;
      }
      dt *= 0.5;
      streak = 0;
      if (dt < cfg.dt_min || ++tries > 80) {
        res.status = RunStatus::kNumericalFailure;
        res.message = "dt underflow while rejecting steps";
        if (last_recorded != accepted) record(cur);
        res.state = cur.state;
        res.next_dt = dt;
        res.next_streak = streak;
        return res;
      }
    }
    cur = std::move(next);
    ++accepted;
    ++streak;
    if (cfg.adaptive_dt && streak >= cfg.grow_after) {
      dt = std::min(dt * cfg.dt_growth, cfg.dt_cap);
      streak = 0;
    }
    if (accepted % std::max(1, cfg.record_stride) == 0) record(cur);
  }

  if (last_recorded != accepted) record(cur);
  res.state = cur.state;
  res.next_dt = dt;
  res.next_streak = streak;
  return res;
}

TrajectoryWindow record_fine_window(const SpectralField& u_start, const BackgroundData& bg,
                                    double dt, int n_records) {
  if (n_records < 3) throw std::invalid_argument("identity window needs >= 3 records");
  FlowConfig cfg;
  cfg.scheme = Scheme::kExplicitRk4;
  cfg.dt = dt;
  cfg.adaptive_dt = false;
  TrajectoryWindow w;
  w.dt = dt;
  Outcome cur = make_outcome(u_start, bg, 0.0, 0.0);
  for (int i = 0; i < n_records; ++i) {
    w.t.push_back(cur.state.t);
    w.energy.push_back(cur.energy_value);
    w.f2.push_back(cur.f2);
    w.lambda.push_back(cur.state.lambda);
    w.u.push_back(cur.state.u);
    w.q.push_back(cur.state.q);
    if (i + 1 < n_records) cur = advance(cur, bg, cfg, dt, 0.0);
  }
  return w;
}

}  // namespace qflow
