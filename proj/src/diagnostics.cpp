#include "qflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "qflow/kernels.hpp"

namespace qflow {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - xm, dy = y[i] - ym;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LineFit f;
  if (sxx <= 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
  return f;
}

}  // namespace

void DiagnosticsSeries::write_csv(std::ostream& os) const {
  os << "# qflow diagnostics v1, h2k_order = " << h2k_order
     << (blow_up ? ", blow_up = 1" : "") << "\n";
  os << "t,energy,f2,constraint,volume,hn2,h2k,sup_u,lambda,com_axis,tail_fraction\n";
  os.precision(17);
  for (std::size_t i = 0; i < t.size(); ++i)
    os << t[i] << "," << energy[i] << "," << f2[i] << "," << constraint[i] << ","
       << volume[i] << "," << hn2[i] << "," << h2k[i] << "," << sup_u[i] << ","
       << lambda[i] << "," << com_axis[i] << "," << tail_fraction[i] << "\n";
}

IdentityResiduals check_flow_identities(const TrajectoryWindow& w, const BackgroundData& bg,
                                        double max_record_dt) {
  if (w.t.size() < 3) throw std::invalid_argument("identity check needs >= 3 records");
  if (w.dt > max_record_dt)
    throw std::invalid_argument("identity window too coarse for finite differences");
  const Geometry& g = *bg.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  const double n = g.dim();
  const std::size_t R = w.t.size();

  double e_num = 0.0, e_scale = 0.0;
  double l_num = 0.0, l_scale = 0.0;
  double q_num = 0.0, q_scale = 0.0;
  // Rounding floors: identities whose both sides sit at noise level (an
  // exactly stationary trajectory) report residual 0 instead of 0/0 junk.
  double e_mag = 0.0, l_mag = 0.0, q_mag = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    e_mag = std::max(e_mag, std::fabs(w.energy[i]));
    l_mag = std::max(l_mag, std::fabs(w.lambda[i]));
    double q2 = 0.0;
    for (std::size_t j = 0; j < N; ++j)
      q2 += g.weights()[j] * w.q[i].values[j] * w.q[i].values[j];
    q_mag = std::max(q_mag, std::sqrt(q2));
  }
  const double e_floor = 1e-11 * (1.0 + e_mag);
  const double l_floor = 1e-11 * (1.0 + l_mag);
  const double q_floor = 1e-11 * (1.0 + q_mag);

  std::vector<double> u_grid(N), enu(N), emnu(N), d(N), pd(N);
  SpectralField d_spec{bg.geom, std::vector<double>(g.mode_count())};
  SpectralField pf = apply_gjms(bg.op, bg.f_spec);
  std::vector<double> pf_grid(N);
  g.to_grid(pf.coeffs.data(), pf_grid.data());

  for (std::size_t i = 1; i + 1 < R; ++i) {
    const double two_dt = w.t[i + 1] - w.t[i - 1];

    // dE/dt = -n F2
    const double fd_e = (w.energy[i + 1] - w.energy[i - 1]) / two_dt;
    const double rhs_e = -n * w.f2[i];
    e_num = std::max(e_num, std::fabs(fd_e - rhs_e));
    e_scale = std::max(e_scale, std::fabs(rhs_e));

    // state-dependent quantities at record i
    g.to_grid(w.u[i].coeffs.data(), u_grid.data());
    k.exp_scale(u_grid.data(), n, enu.data(), N);
    k.exp_scale(u_grid.data(), -n, emnu.data(), N);
    const double lam = w.lambda[i];
    for (std::size_t j = 0; j < N; ++j)
      d[j] = w.q[i].values[j] - lam * bg.f.values[j];  // Q - lambda f

    // dlambda/dt = (int f^2 dmu_g)^{-1} int (P_g f - n lam f^2)(lam f - Q) dmu_g
    const double fd_l = (w.lambda[i + 1] - w.lambda[i - 1]) / two_dt;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double pgf_j = emnu[j] * pf_grid[j];
      num += g.weights()[j] * (pgf_j - n * lam * bg.f_squared[j]) * (-d[j]) * enu[j];
      den += g.weights()[j] * bg.f_squared[j] * enu[j];
    }
    const double rhs_l = num / den;
    l_num = std::max(l_num, std::fabs(fd_l - rhs_l));
    l_scale = std::max(l_scale, std::fabs(rhs_l));

    // dQ/dt = -P_g (Q - lam f) + n Q (Q - lam f), compared in L2(mu_0)
    g.to_spectral(d.data(), d_spec.coeffs.data());
    k.mul(bg.op.mu.data(), d_spec.coeffs.data(), d_spec.coeffs.data(), d_spec.coeffs.size());
    g.to_grid(d_spec.coeffs.data(), pd.data());
    double resid2 = 0.0, scale2 = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double fd_q = (w.q[i + 1].values[j] - w.q[i - 1].values[j]) / two_dt;
      const double rhs_q = -emnu[j] * pd[j] + n * w.q[i].values[j] * d[j];
      resid2 += g.weights()[j] * (fd_q - rhs_q) * (fd_q - rhs_q);
      scale2 += g.weights()[j] * rhs_q * rhs_q;
    }
    q_num = std::max(q_num, std::sqrt(resid2));
    q_scale = std::max(q_scale, std::sqrt(scale2));
  }

  auto rel = [](double num, double scale, double floor) {
    if (num <= floor && scale <= floor) return 0.0;
    return num / std::max(scale, floor);
  };
  IdentityResiduals out;
  out.energy_identity = rel(e_num, e_scale, e_floor);
  out.lambda_identity = rel(l_num, l_scale, l_floor);
  out.q_identity = rel(q_num, q_scale, q_floor);
  return out;
}

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& delta) {
  if (t.size() != delta.size()) throw std::invalid_argument("rate fit: size mismatch");
  double dmax = 0.0;
  for (double d : delta) dmax = std::max(dmax, d);
  const double floor = 100.0 * std::numeric_limits<double>::epsilon() * dmax;
  std::vector<double> ts, ys_exp, xs_poly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(delta[i]) || delta[i] <= floor) continue;
    ts.push_back(t[i]);
    ys_exp.push_back(std::log(delta[i]));
    xs_poly.push_back(std::log1p(t[i]));
  }
  if (ts.size() < 20) throw std::invalid_argument("rate fit: fewer than 20 usable samples");
  if (!(ys_exp.back() < ys_exp.front()))
    throw std::invalid_argument("rate fit: series does not decrease");

  const LineFit fe = least_squares(ts, ys_exp);
  const LineFit fp = least_squares(xs_poly, ys_exp);

  RateFit out;
  out.t_lo = ts.front();
  out.t_hi = ts.back();
  out.samples = static_cast<int>(ts.size());
  // Dead-band preference for the polynomial model (the general guarantee).
  if (fe.r2 > fp.r2 + 0.005) {
    out.model = RateModel::kExponential;
    out.rate = -fe.slope;
    out.r2 = fe.r2;
  } else {
    out.model = RateModel::kPolynomial;
    out.rate = -fp.slope;
    out.r2 = fp.r2;
  }
  if (!(out.rate > 0.0)) throw std::invalid_argument("rate fit: selected model does not decay");
  return out;
}

LojasiewiczEstimate estimate_lojasiewicz(const std::vector<double>& energy_gap,
                                         const std::vector<double>& f2) {
  if (energy_gap.size() != f2.size())
    throw std::invalid_argument("Lojasiewicz estimate: size mismatch");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < energy_gap.size(); ++i) {
    if (!(energy_gap[i] > 0.0) || !(f2[i] > 0.0)) continue;
    if (!std::isfinite(energy_gap[i]) || !std::isfinite(f2[i])) continue;
    x.push_back(std::log(energy_gap[i]));
    y.push_back(0.5 * std::log(f2[i]));  // log ||DE|| = log sqrt(F2)
  }
  if (x.size() < 10)
    throw std::invalid_argument("Lojasiewicz estimate: fewer than 10 usable samples");
  const LineFit f = least_squares(x, y);
  LojasiewiczEstimate out;
  out.theta = 1.0 - f.slope;
  out.theta = std::min(out.theta, 0.5);
  out.theta = std::max(out.theta, 1e-6);
  out.r2 = f.r2;
  out.samples = static_cast<int>(x.size());
  return out;
}

ConcentrationReport detect_concentration(const SpectralField& u, double hn2_ceiling) {
  if (u.geom->kind() != GeomKind::kZonalSphere)
    throw std::invalid_argument("concentration detector is defined on the zonal sphere");
  const Geometry& g = *u.geom;
  const auto& k = kernels::active();
  const std::size_t N = g.node_count();
  const int n = g.dim();
  GridField ug = to_grid(u);
  std::vector<double> enu(N);
  k.exp_scale(ug.values.data(), n, enu.data(), N);
  const double mass = k.dot(g.weights().data(), enu.data(), N);
  const double vol = g.volume();

  const double radii[3] = {kPi / 16.0, kPi / 8.0, kPi / 4.0};
  std::array<double, 3> frac_n{}, frac_s{}, volf_n{}, volf_s{};
  for (int c = 0; c < 3; ++c) {
    const double xcut = std::cos(radii[c]);
    double mn = 0.0, ms = 0.0, vn = 0.0, vs = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double x = g.node_coord(i, 0);
      if (x >= xcut) {
        mn += g.weights()[i] * enu[i];
        vn += g.weights()[i];
      }
      if (x <= -xcut) {
        ms += g.weights()[i] * enu[i];
        vs += g.weights()[i];
      }
    }
    frac_n[c] = mn / mass;
    frac_s[c] = ms / mass;
    volf_n[c] = vn / vol;
    volf_s[c] = vs / vol;
  }

  ConcentrationReport rep;
  rep.pole = frac_n[0] >= frac_s[0] ? Pole::kNorth : Pole::kSouth;
  rep.cap_mass_fraction = rep.pole == Pole::kNorth ? frac_n : frac_s;
  rep.cap_volume_fraction = rep.pole == Pole::kNorth ? volf_n : volf_s;
  rep.com_axis = center_of_mass(ug)[0];
  rep.hn2 = sobolev_norm(u, gjms_multiplier(u.geom), 0.5 * n);
  rep.flag = rep.cap_mass_fraction[0] > 0.9 && rep.hn2 > hn2_ceiling;
  return rep;
}

}  // namespace qflow
