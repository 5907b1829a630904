#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qflow/diagnostics.hpp"
#include "qflow/flow.hpp"

using namespace qflow;

namespace {

BackgroundData torus_bg(std::shared_ptr<const Geometry> geom, double q0_const,
                        const std::function<double(const double*)>& f) {
  GridField q0{geom, std::vector<double>(geom->node_count(), q0_const)};
  return make_background(geom, q0, make_grid(geom, f), q0_const != 0.0);
}

}  // namespace

TEST_CASE("rate fit recovers synthetic decay laws") {
  SUBCASE("exponential fixture") {
    std::vector<double> t, d;
    for (int i = 0; i < 60; ++i) {
      t.push_back(0.25 * i);
      d.push_back(3.0 * std::exp(-2.0 * 0.25 * i));
    }
    RateFit fit = fit_rate(t, d);
    CHECK(fit.model == RateModel::kExponential);
    CHECK(fit.rate == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("polynomial fixture") {
    std::vector<double> t, d;
    for (int i = 0; i < 60; ++i) {
      t.push_back(0.5 * i);
      d.push_back(std::pow(1.0 + 0.5 * i, -1.5));
    }
    RateFit fit = fit_rate(t, d);
    CHECK(fit.model == RateModel::kPolynomial);
    CHECK(fit.rate == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("floor exclusion keeps the fit clean") {
    std::vector<double> t, d;
    for (int i = 0; i < 80; ++i) {
      t.push_back(0.5 * i);
      const double v = std::exp(-2.0 * 0.5 * i);
      d.push_back(std::max(v, 1e-17));  // clipped tail must be dropped
    }
    RateFit fit = fit_rate(t, d);
    CHECK(fit.model == RateModel::kExponential);
    CHECK(fit.rate == doctest::Approx(2.0).epsilon(1e-4));
  }
  SUBCASE("error paths") {
    std::vector<double> t(25), d(25, 1.0);
    for (int i = 0; i < 25; ++i) t[i] = i;
    CHECK_THROWS_AS(fit_rate(t, d), std::invalid_argument);  // not decreasing
    std::vector<double> t5{0, 1, 2, 3, 4}, d5{5, 4, 3, 2, 1};
    CHECK_THROWS_AS(fit_rate(t5, d5), std::invalid_argument);  // too few
  }
}

TEST_CASE("Lojasiewicz exponent fixtures") {
  SUBCASE("exponential branch gives theta = 1/2") {
    std::vector<double> gap, f2;
    for (int i = 1; i <= 30; ++i) {
      const double t = 0.3 * i;
      gap.push_back(std::exp(-2.0 * t));
      f2.push_back(std::exp(-2.0 * t));  // ||DE|| = e^{-t}
    }
    LojasiewiczEstimate est = estimate_lojasiewicz(gap, f2);
    CHECK(est.theta == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(est.samples == 30);
  }
  SUBCASE("polynomial branch gives theta = 1/4") {
    std::vector<double> gap, f2;
    for (int i = 1; i <= 30; ++i) {
      const double t = 1.0 + 0.5 * i;
      gap.push_back(std::pow(t, -2.0));
      f2.push_back(std::pow(t, -3.0));  // ||DE|| = t^{-3/2}, slope 3/4
    }
    LojasiewiczEstimate est = estimate_lojasiewicz(gap, f2);
    CHECK(est.theta == doctest::Approx(0.25).epsilon(1e-6));
  }
  SUBCASE("too few usable samples") {
    std::vector<double> gap{1.0, 0.5, 0.1}, f2{1.0, 0.5, 0.1};
    CHECK_THROWS_AS(estimate_lojasiewicz(gap, f2), std::invalid_argument);
  }
}

TEST_CASE("flow identities on a resolved torus window") {
  auto t2 = Geometry::make(GeomKind::kTorus, 2, 32);
  BackgroundData bg =
      torus_bg(t2, 0.0, [](const double* x) { return std::cos(x[0]) - 0.3; });
  SpectralField u0 = zero_spectral(t2);
  u0.coeffs[t2->torus_mode({1, 0}, false)] = 0.2 * std::sqrt(t2->volume() / 2.0);
  u0.coeffs[t2->torus_mode({3, 1}, true)] = 0.05 * std::sqrt(t2->volume() / 2.0);
  u0 = project_constraint(u0, bg, 1e-13);

  SUBCASE("stationary trajectory has vanishing residuals") {
    auto flat = Geometry::make(GeomKind::kTorus, 2, 16);
    BackgroundData bgs = torus_bg(flat, -1.0, [](const double*) { return -1.0; });
    TrajectoryWindow w = record_fine_window(zero_spectral(flat), bgs, 1e-4, 5);
    IdentityResiduals r = check_flow_identities(w, bgs);
    CHECK(r.energy_identity <= 1e-10);
    CHECK(r.q_identity <= 1e-10);
    CHECK(r.lambda_identity <= 1e-10);
  }

  SUBCASE("transient window: residuals small and second order in spacing") {
    TrajectoryWindow w1 = record_fine_window(u0, bg, 1e-4, 41);
    IdentityResiduals r1 = check_flow_identities(w1, bg);
    CHECK(r1.energy_identity <= 1e-3);
    CHECK(r1.q_identity <= 1e-3);
    CHECK(r1.lambda_identity <= 1e-3);

    TrajectoryWindow w2 = record_fine_window(u0, bg, 5e-5, 81);
    IdentityResiduals r2 = check_flow_identities(w2, bg);
    CHECK(r1.energy_identity / r2.energy_identity > 2.5);
    CHECK(r1.energy_identity / r2.energy_identity < 8.0);
    CHECK(r1.q_identity / r2.q_identity > 2.5);
    CHECK(r1.q_identity / r2.q_identity < 8.0);
    CHECK(r1.lambda_identity / r2.lambda_identity > 2.5);
    CHECK(r1.lambda_identity / r2.lambda_identity < 8.0);
  }

  SUBCASE("coarse windows are refused") {
    TrajectoryWindow w = record_fine_window(u0, bg, 5e-3, 5);
    CHECK_THROWS_AS(check_flow_identities(w, bg), std::invalid_argument);
  }
}

TEST_CASE("concentration detector") {
  auto s2 = Geometry::make(GeomKind::kZonalSphere, 2, 96);

  SUBCASE("round state: cap ratios equal the discrete volume fractions") {
    ConcentrationReport rep = detect_concentration(zero_spectral(s2));
    for (int c = 0; c < 3; ++c)
      CHECK(rep.cap_mass_fraction[c] ==
            doctest::Approx(rep.cap_volume_fraction[c]).epsilon(1e-12));
    CHECK(!rep.flag);
    CHECK(rep.cap_mass_fraction[0] <= rep.cap_mass_fraction[1]);
    CHECK(rep.cap_mass_fraction[1] <= rep.cap_mass_fraction[2]);
  }

  SUBCASE("strong dilation pullback concentrates and flags") {
    GridField w = pullback(zero_grid(s2), dilation(s2, Pole::kNorth, 50.0));
    ConcentrationReport rep = detect_concentration(to_spectral(w), 10.0);
    CHECK(rep.pole == Pole::kNorth);
    CHECK(rep.cap_mass_fraction[0] > 0.9);
    CHECK(rep.hn2 > 10.0);
    CHECK(rep.flag);
    CHECK(rep.com_axis > 0.8);
  }

  SUBCASE("moderate state does not flag") {
    SpectralField u = zero_spectral(s2);
    u.coeffs[s2->sphere_mode(1)] = 0.5;
    ConcentrationReport rep = detect_concentration(u, 10.0);
    CHECK(!rep.flag);
  }

  SUBCASE("torus is rejected") {
    auto t2 = Geometry::make(GeomKind::kTorus, 2, 16);
    CHECK_THROWS_AS(detect_concentration(zero_spectral(t2)), std::invalid_argument);
  }
}

TEST_CASE("diagnostics CSV export") {
  auto t2 = Geometry::make(GeomKind::kTorus, 2, 16);
  BackgroundData bg =
      torus_bg(t2, 0.0, [](const double* x) { return std::cos(x[0]) - 0.3; });
  SpectralField u0 = project_constraint(zero_spectral(t2), bg, 1e-12);
  FlowConfig cfg;
  cfg.dt = 0.05;
  cfg.t_max = 0.5;
  cfg.f2_stop = 0.0;
  cfg.rhs_l2_stop = 0.0;
  cfg.record_stride = 2;
  RunResult res = run_flow(u0, bg, cfg);
  std::ostringstream os;
  res.series.write_csv(os);
  const std::string text = os.str();
  CHECK(text.find("t,energy,f2,constraint,volume,hn2,h2k,sup_u,lambda,com_axis,"
                  "tail_fraction") != std::string::npos);
  std::size_t rows = 0;
  for (char ch : text)
    if (ch == '\n') ++rows;
  CHECK(rows == res.series.size() + 2);  // comment + header + data
}
