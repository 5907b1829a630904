#include "qflow/solvers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qflow/flow.hpp"
#include "qflow/kernels.hpp"

namespace qflow {

namespace {

constexpr double kExpGuard = 700.0;

struct GridWork {
  std::vector<double> u_grid;
  std::vector<double> enu;   // e^{nu}
  std::vector<double> fenu;  // f e^{nu}
  std::vector<double> pu;    // P0 u on the grid
};

GridWork grid_work(const SpectralField& u, const BackgroundData& bg) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  GridWork w;
  w.u_grid.resize(N);
  g.to_grid(u.coeffs.data(), w.u_grid.data());
  if (g.dim() * k.max_abs(w.u_grid.data(), N) > kExpGuard)
    throw std::runtime_error("e^{n u} overflows double range");
  w.enu.resize(N);
  k.exp_scale(w.u_grid.data(), g.dim(), w.enu.data(), N);
  w.fenu.resize(N);
  k.mul(bg.f.values.data(), w.enu.data(), w.fenu.data(), N);
  SpectralField pu = apply_gjms(bg.op, u);
  w.pu.resize(N);
  g.to_grid(pu.coeffs.data(), w.pu.data());
  return w;
}

MultiplierReport extract_multipliers(const GridWork& w, const BackgroundData& bg) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  const double* wt = g.weights().data();
  const double g_ee = k.dot3(wt, w.enu.data(), w.enu.data(), N);
  const double g_ef = k.dot3(wt, w.enu.data(), w.fenu.data(), N);
  const double g_ff = k.dot3(wt, w.fenu.data(), w.fenu.data(), N);
  const double r_e = k.dot3(wt, w.pu.data(), w.enu.data(), N);
  const double r_f = k.dot3(wt, w.pu.data(), w.fenu.data(), N);
  const double det = g_ee * g_ff - g_ef * g_ef;
  MultiplierReport rep;
  if (std::fabs(det) < 1e-300) throw std::runtime_error("degenerate multiplier system");
  rep.alpha = (r_e * g_ff - r_f * g_ef) / det;
  rep.beta = (g_ee * r_f - g_ef * r_e) / det;
  double resid2 = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double r = w.pu[i] - rep.alpha * w.enu[i] - rep.beta * w.fenu[i];
    resid2 += wt[i] * r * r;
  }
  rep.residual = std::sqrt(resid2);
  rep.beta_quotient = k.dot3(wt, bg.f.values.data(), w.pu.data(), N) /
                      k.dot3(wt, bg.f.values.data(), w.fenu.data(), N);
  return rep;
}

double minimizer_energy(const SpectralField& u, const BackgroundData& bg) {
  // int u P0 u dmu, the variational normalization (no n/2 prefactor).
  return kernels::active().dot3(bg.op.mu.data(), u.coeffs.data(), u.coeffs.data(),
                                u.coeffs.size());
}

}  // namespace

double stationary_residual(const SpectralField& u, double lambda,
                           const BackgroundData& bg) {
  GridWork w = grid_work(u, bg);
  const Geometry& g = *bg.geom;
  double acc = 0.0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const double r = w.pu[i] + bg.q0.values[i] - lambda * w.fenu[i];
    acc += g.weights()[i] * r * r;
  }
  return std::sqrt(acc);
}

namespace detail {

int minres(const std::function<void(const double*, double*)>& apply_a,
           const std::function<void(const double*, double*)>& precond,
           const std::vector<double>& b, std::vector<double>& x, double rel_tol,
           int max_iterations) {
  const std::size_t n = b.size();
  const auto& k = kernels::active();
  x.assign(n, 0.0);
  std::vector<double> r1 = b, r2 = b, y(n), v(n), w(n, 0.0), w1(n, 0.0), w2(n, 0.0);
  precond(r1.data(), y.data());
  double beta1 = k.dot(r1.data(), y.data(), n);
  if (beta1 < 0.0) throw std::runtime_error("minres: preconditioner is not positive");
  if (beta1 == 0.0) return 0;
  beta1 = std::sqrt(beta1);

  double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0;
  double phibar = beta1, cs = -1.0, sn = 0.0;

  for (int itn = 1; itn <= max_iterations; ++itn) {
    k.scale(y.data(), 1.0 / beta, v.data(), n);
    apply_a(v.data(), y.data());
    if (itn >= 2) k.axpby(-beta / oldb, r1.data(), 1.0, y.data(), n);
    const double alfa = k.dot(v.data(), y.data(), n);
    k.axpby(-alfa / beta, r2.data(), 1.0, y.data(), n);
    r1 = r2;
    r2 = y;
    precond(r2.data(), y.data());
    oldb = beta;
    beta = k.dot(r2.data(), y.data(), n);
    if (beta < 0.0) throw std::runtime_error("minres: preconditioner is not positive");
    beta = std::sqrt(beta);

    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    double gamma = std::sqrt(gbar * gbar + beta * beta);
    gamma = std::max(gamma, std::numeric_limits<double>::min());
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    w1 = w2;
    w2 = w;
    for (std::size_t i = 0; i < n; ++i)
      w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
    k.axpby(phi, w.data(), 1.0, x.data(), n);

    if (phibar <= rel_tol * beta1) return itn;
  }
  throw std::runtime_error("minres: no convergence within the iteration budget");
}

}  // namespace detail

NewtonResult newton_refine(const SpectralField& u0, double lambda0,
                           const BackgroundData& bg, double tol, int max_iterations) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t M = g.mode_count();
  const std::size_t N = g.node_count();
  const double n = g.dim();
  const double cons_scale = std::max(1.0, std::fabs(bg.k_n));

  NewtonResult res;
  res.u = u0;
  res.lambda = lambda0;

  std::vector<double> r_grid(N), b(M), pw(M), y(M), z(M), cu(M), scratch_g(N),
      scratch_s(M);

  for (int iter = 0; iter <= max_iterations; ++iter) {
    GridWork w = grid_work(res.u, bg);
    double resid2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      r_grid[i] = w.pu[i] + bg.q0.values[i] - res.lambda * w.fenu[i];
      resid2 += g.weights()[i] * r_grid[i] * r_grid[i];
    }
    const double resid = std::sqrt(resid2);
    const double cons =
        k.dot3(g.weights().data(), bg.f.values.data(), w.enu.data(), N) - bg.k_n;
    res.residual_history.push_back(resid);
    res.iterations = iter;
    if (resid <= tol && std::fabs(cons) <= tol * cons_scale) return res;
    if (iter == max_iterations)
      throw std::runtime_error("newton_refine: no convergence within 30 iterations");

    // bordered step: J du - P(f e^{nu}) dl = -F,  n <P(f e^{nu}), du> = -C
    // When k_n = 0 the stationary set carries the exact gauge family
    // (u + c, lambda e^{-nc}), which makes the bordered system singular; the
    // constant mode is frozen in that regime (its equation is then implied
    // by the constraint row).
    const bool gauge_fix = std::fabs(bg.k_n) < 1e-13;
    g.to_spectral(r_grid.data(), b.data());
    k.scale(b.data(), -1.0, b.data(), M);
    g.to_spectral(w.fenu.data(), pw.data());
    const double rho = n * std::fabs(res.lambda) * k.max_abs(w.fenu.data(), N) + 1.0;
    if (gauge_fix) {
      b[0] = 0.0;
      pw[0] = 0.0;
    }

    const double lam = res.lambda;
    auto apply_j = [&](const double* xin, double* out) {
      g.to_grid(xin, scratch_g.data());
      k.mul(w.fenu.data(), scratch_g.data(), scratch_g.data(), N);
      g.to_spectral(scratch_g.data(), scratch_s.data());
      for (std::size_t m = 0; m < M; ++m)
        out[m] = bg.op.mu[m] * xin[m] - n * lam * scratch_s[m];
      if (gauge_fix) out[0] = rho * xin[0];
    };
    auto precond = [&](const double* xin, double* out) {
      for (std::size_t m = 0; m < M; ++m) out[m] = xin[m] / (bg.op.mu[m] + rho);
    };

    const int cap = static_cast<int>(4 * M) + 200;
    try {
      detail::minres(apply_j, precond, b, y, 1e-13, cap);
      detail::minres(apply_j, precond, pw, z, 1e-13, cap);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string("newton_refine: Jacobian solve failed: ") +
                               e.what());
    }
    k.scale(pw.data(), n, cu.data(), M);
    const double denom = k.dot(cu.data(), z.data(), M);
    if (std::fabs(denom) < 1e-300)
      throw std::runtime_error("newton_refine: singular bordered system");
    const double dl = (-cons - k.dot(cu.data(), y.data(), M)) / denom;
    for (std::size_t m = 0; m < M; ++m) res.u.coeffs[m] += y[m] + dl * z[m];
    res.lambda += dl;
  }
  return res;  // unreachable
}

SpectralField project_two_constraints(const SpectralField& u, const BackgroundData& bg,
                                      double tol) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  const double n = g.dim();
  const double vol = g.volume();
  const double f_sup = k.max_abs(bg.f.values.data(), N);

  std::vector<double> u_grid(N), wfield(N), e(N);
  g.to_grid(u.coeffs.data(), u_grid.data());

  double c = 0.0, s = 0.0;
  double f1 = 0.0, f2 = 0.0;
  auto eval_constraints = [&](double cc, double ss, double* out1, double* out2) {
    for (std::size_t i = 0; i < N; ++i)
      wfield[i] = u_grid[i] + cc + ss * bg.f.values[i];
    if (n * k.max_abs(wfield.data(), N) > kExpGuard) return false;
    k.exp_scale(wfield.data(), n, e.data(), N);
    *out1 = k.dot(g.weights().data(), e.data(), N) - vol;
    *out2 = k.dot3(g.weights().data(), bg.f.values.data(), e.data(), N);
    return true;
  };
  if (!eval_constraints(c, s, &f1, &f2))
    throw InfeasibleConstraint("two-constraint projection: seed out of range");

  const double tol1 = tol * vol;
  const double tol2 = tol * std::max(1.0, f_sup * vol);
  for (int it = 0; it < 200; ++it) {
    if (std::fabs(f1) <= tol1 && std::fabs(f2) <= tol2) {
      SpectralField out = u;
      out.coeffs[0] += c * std::sqrt(vol);
      k.axpby(s, bg.f_spec.coeffs.data(), 1.0, out.coeffs.data(), out.coeffs.size());
      return out;
    }
    const double j11 = n * k.dot(g.weights().data(), e.data(), N);
    const double j12 = n * f2;  // n int f e^{nw}
    const double j22 = n * k.dot3(g.weights().data(), bg.f_squared.data(), e.data(), N);
    const double det = j11 * j22 - j12 * j12;
    if (std::fabs(det) < 1e-300)
      throw InfeasibleConstraint("two-constraint projection: singular Jacobian");
    const double dc = -(j22 * f1 - j12 * f2) / det;
    const double ds = -(-j12 * f1 + j11 * f2) / det;
    const double base = f1 * f1 + f2 * f2;
    double step = 1.0;
    bool moved = false;
    for (int h = 0; h < 40; ++h) {
      double t1, t2;
      if (eval_constraints(c + step * dc, s + step * ds, &t1, &t2) &&
          t1 * t1 + t2 * t2 <= base * (1.0 - 1e-4 * step)) {
        c += step * dc;
        s += step * ds;
        f1 = t1;
        f2 = t2;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) throw InfeasibleConstraint("two-constraint projection: no descent step");
  }
  throw InfeasibleConstraint("two-constraint projection did not converge");
}

std::pair<SpectralField, MultiplierReport> direct_minimize(const BackgroundData& bg,
                                                           const SpectralField& seed,
                                                           const MinimizeOptions& opts) {
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t M = g.mode_count();
  const std::size_t N = g.node_count();

  if (std::fabs(bg.k_n) > 1e-10)
    throw std::invalid_argument("direct_minimize requires k_n = 0");
  if (k.max_abs(bg.q0.values.data(), N) > 1e-13)
    throw std::invalid_argument("direct_minimize requires Q0 = 0 (after the reduction)");
  if (integrate(bg.f) >= 0.0)
    throw std::invalid_argument("direct_minimize requires int f dmu < 0");

  SpectralField u = project_two_constraints(seed, bg, opts.constraint_tol);
  double e_val = minimizer_energy(u, bg);

  std::vector<double> grad(M), dir(M), prev_u, prev_dir;
  double alpha = 1.0;
  MultiplierReport rep;

  for (int it = 0; it < opts.max_iterations; ++it) {
    GridWork w = grid_work(u, bg);
    rep = extract_multipliers(w, bg);
    rep.iterations = it;
    if (rep.residual <= opts.residual_tol) break;
    if (it + 1 == opts.max_iterations)
      throw std::runtime_error("direct_minimize: residual tolerance not reached");

    // Sobolev-preconditioned gradient of int u P0 u, L2-orthogonally projected
    // onto the tangent space of both constraints, { h : <e^{nu}, h> = 0,
    // <f e^{nu}, h> = 0 }. Projecting on both sides of the preconditioner
    // keeps the direction tangent and the slope provably positive.
    for (std::size_t m = 0; m < M; ++m) grad[m] = 2.0 * bg.op.mu[m] * u.coeffs[m];
    std::vector<double> b1(M), b2(M);
    g.to_spectral(w.enu.data(), b1.data());
    g.to_spectral(w.fenu.data(), b2.data());
    const double g11 = k.dot(b1.data(), b1.data(), M);
    const double g12 = k.dot(b1.data(), b2.data(), M);
    const double g22 = k.dot(b2.data(), b2.data(), M);
    const double det = g11 * g22 - g12 * g12;
    auto tangent_project = [&](std::vector<double>& x) {
      const double r1 = k.dot(b1.data(), x.data(), M);
      const double r2 = k.dot(b2.data(), x.data(), M);
      const double p = (r1 * g22 - r2 * g12) / det;
      const double q = (g11 * r2 - g12 * r1) / det;
      k.axpby(-p, b1.data(), 1.0, x.data(), M);
      k.axpby(-q, b2.data(), 1.0, x.data(), M);
    };
    dir = grad;
    tangent_project(dir);
    for (std::size_t m = 0; m < M; ++m) dir[m] /= bg.op.mu[m] + bg.op.lambda1;
    tangent_project(dir);

    const double slope = k.dot(grad.data(), dir.data(), M);
    if (slope <= 0.0) throw std::runtime_error("direct_minimize: no descent direction");

    // Barzilai-Borwein initial step, Armijo backtracking with re-projection
    if (!prev_u.empty()) {
      double ss = 0.0, sy = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double du = u.coeffs[m] - prev_u[m];
        ss += du * du;
        sy += du * (dir[m] - prev_dir[m]);
      }
      if (sy > 1e-300) alpha = std::min(std::max(ss / sy, 1e-6), 1e3);
    }
    prev_u = u.coeffs;
    prev_dir = dir;

    bool moved = false;
    for (int h = 0; h < 40; ++h) {
      SpectralField trial = u;
      k.axpby(-alpha, dir.data(), 1.0, trial.coeffs.data(), M);
      SpectralField projected;
      try {
        projected = project_two_constraints(trial, bg, opts.constraint_tol);
      } catch (const InfeasibleConstraint&) {
        alpha *= 0.5;
        continue;
      }
      const double e_new = minimizer_energy(projected, bg);
      if (e_new <= e_val - 1e-4 * alpha * slope) {
        u = std::move(projected);
        e_val = e_new;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) throw std::runtime_error("direct_minimize: line search failure");
  }

  if (!(rep.beta > 0.0))
    throw std::runtime_error(
        "direct_minimize: extracted beta <= 0 violates the variational contract");
  return {u, rep};
}

CoercivityReport hessian_coercivity(const SpectralField& u, double lambda,
                                    const BackgroundData& bg,
                                    TangentConvention convention, int truncation) {
  const Geometry& g = *bg.geom;
  if (truncation < 1) throw std::invalid_argument("truncation must be positive");
  if (stationary_residual(u, lambda, bg) > 1e-6)
    throw std::invalid_argument("hessian_coercivity requires a stationary pair");

  std::vector<std::size_t> modes;
  if (g.kind() == GeomKind::kZonalSphere) {
    const int top = std::min(truncation, g.max_degree());
    for (int l = 0; l <= top; ++l) modes.push_back(g.sphere_mode(l));
  } else {
    modes.push_back(0);
    for (std::size_t m = 1; m < g.mode_count(); ++m) {
      const auto& kvec = g.mode_frequency(m);
      int kinf = 0;
      for (int ki : kvec) kinf = std::max(kinf, std::abs(ki));
      if (kinf <= truncation) modes.push_back(m);
    }
  }
  const std::size_t msel = modes.size();
  const std::size_t N = g.node_count();
  const double n = g.dim();

  GridWork w = grid_work(u, bg);

  Eigen::MatrixXd basis(N, msel);
  std::vector<double> unit(g.mode_count(), 0.0), col(N);
  for (std::size_t a = 0; a < msel; ++a) {
    unit[modes[a]] = 1.0;
    g.to_grid(unit.data(), col.data());
    unit[modes[a]] = 0.0;
    for (std::size_t i = 0; i < N; ++i) basis(i, a) = col[i];
  }

  Eigen::VectorXd wt(N);
  for (std::size_t i = 0; i < N; ++i) wt(i) = g.weights()[i] * w.fenu[i];
  Eigen::MatrixXd form =
      -n * n * lambda * (basis.transpose() * wt.asDiagonal() * basis);
  for (std::size_t a = 0; a < msel; ++a) form(a, a) += n * bg.op.mu[modes[a]];
  form = 0.5 * (form + form.transpose()).eval();

  Eigen::VectorXd v(msel);
  if (convention == TangentConvention::kWeighted) {
    std::vector<double> fenu_spec(g.mode_count());
    g.to_spectral(w.fenu.data(), fenu_spec.data());
    for (std::size_t a = 0; a < msel; ++a) v(a) = fenu_spec[modes[a]];
  } else {
    for (std::size_t a = 0; a < msel; ++a) v(a) = bg.f_spec.coeffs[modes[a]];
  }
  const double vnorm = v.norm();
  if (vnorm == 0.0) throw std::runtime_error("tangent constraint vector vanished");

  // Householder reflector sending v to a multiple of e_0; the remaining
  // columns form an orthonormal basis of the tangent space.
  Eigen::VectorXd h = v;
  h(0) += (v(0) >= 0.0 ? vnorm : -vnorm);
  const double h2 = h.squaredNorm();
  Eigen::MatrixXd hmat =
      Eigen::MatrixXd::Identity(msel, msel) - (2.0 / h2) * h * h.transpose();
  Eigen::MatrixXd z = hmat.rightCols(msel - 1);

  Eigen::MatrixXd reduced = z.transpose() * form * z;
  reduced = 0.5 * (reduced + reduced.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
  if (es.info() != Eigen::Success) throw std::runtime_error("coercivity eigensolve failed");

  CoercivityReport rep;
  rep.min_eigenvalue = es.eigenvalues()(0);
  rep.truncation = truncation;
  rep.convention = convention;
  rep.basis_size = static_cast<int>(msel);
  return rep;
}

}  // namespace qflow
