#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "qflow/geometry.hpp"
#include "qflow/kernels.hpp"

using namespace qflow;

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

TEST_CASE("make_geometry: volumes and validation") {
  auto t2 = Geometry::make(GeomKind::kTorus, 2, 64);
  CHECK(t2->volume() == doctest::Approx(4.0 * kPi * kPi).epsilon(1e-14));

  auto s2 = Geometry::make(GeomKind::kZonalSphere, 2, 32);
  CHECK(s2->volume() == doctest::Approx(4.0 * kPi).epsilon(1e-14));

  auto s4 = Geometry::make(GeomKind::kZonalSphere, 4, 32);
  CHECK(s4->volume() == doctest::Approx(8.0 * kPi * kPi / 3.0).epsilon(1e-14));

  CHECK_THROWS_AS(Geometry::make(GeomKind::kTorus, 3, 16), std::invalid_argument);
  CHECK_THROWS_AS(Geometry::make(GeomKind::kTorus, 8, 16), std::invalid_argument);
  CHECK_THROWS_AS(Geometry::make(GeomKind::kZonalSphere, 2, 4), std::invalid_argument);
}

TEST_CASE("quadrature weights are positive and sum to the volume") {
  for (auto geom : {Geometry::make(GeomKind::kTorus, 2, 32),
                    Geometry::make(GeomKind::kZonalSphere, 2, 48),
                    Geometry::make(GeomKind::kZonalSphere, 4, 32),
                    Geometry::make(GeomKind::kZonalSphere, 6, 16)}) {
    double sum = 0.0;
    for (double w : geom->weights()) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(geom->volume()).epsilon(1e-12));
  }
}

TEST_CASE("sphere basis is orthonormal under the quadrature (exactness to 2L)") {
  for (int n : {2, 4, 6}) {
    auto geom = Geometry::make(GeomKind::kZonalSphere, n, 16);
    const int L = geom->max_degree();
    // q_a q_b has degree <= 2L; the rule must integrate it exactly.
    for (int a = 0; a <= L; ++a) {
      SpectralField ua = zero_spectral(geom);
      ua.coeffs[a] = 1.0;
      GridField ga = to_grid(ua);
      for (int b = a; b <= L; ++b) {
        SpectralField ub = zero_spectral(geom);
        ub.coeffs[b] = 1.0;
        GridField gb = to_grid(ub);
        double ip = 0.0;
        for (std::size_t i = 0; i < ga.values.size(); ++i)
          ip += geom->weights()[i] * ga.values[i] * gb.values[i];
        CHECK(ip == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
    }
  }
}

TEST_CASE("torus trigonometric integration is exact below the band limit") {
  auto geom = Geometry::make(GeomKind::kTorus, 2, 16);
  GridField cosx = make_grid(geom, [](const double* x) { return std::cos(x[0]); });
  CHECK(std::fabs(integrate(cosx)) <= 1e-13);
  GridField mix = make_grid(
      geom, [](const double* x) { return std::cos(3 * x[0]) * std::sin(5 * x[1]); });
  CHECK(std::fabs(integrate(mix)) <= 1e-12);
  GridField sq = make_grid(geom, [](const double* x) { return std::cos(7 * x[0]) *
                                                             std::cos(7 * x[0]); });
  CHECK(integrate(sq) == doctest::Approx(0.5 * geom->volume()).epsilon(1e-13));
}

TEST_CASE("transform pair: constants, single harmonics, Parseval, round trip") {
  auto t2 = Geometry::make(GeomKind::kTorus, 2, 32);
  auto s4 = Geometry::make(GeomKind::kZonalSphere, 4, 24);

  SUBCASE("constant maps to the constant mode only") {
    for (auto geom : {t2, s4}) {
      GridField one{geom, std::vector<double>(geom->node_count(), 1.0)};
      SpectralField c = to_spectral(one);
      CHECK(c.coeffs[0] == doctest::Approx(std::sqrt(geom->volume())).epsilon(1e-13));
      for (std::size_t m = 1; m < c.coeffs.size(); ++m)
        CHECK(std::fabs(c.coeffs[m]) <= 1e-12);
    }
  }

  SUBCASE("torus cos x lands on the (1,0) cosine mode") {
    GridField cosx = make_grid(t2, [](const double* x) { return std::cos(x[0]); });
    SpectralField c = to_spectral(cosx);
    const std::size_t m = t2->torus_mode({1, 0}, false);
    CHECK(c.coeffs[m] == doctest::Approx(std::sqrt(t2->volume() / 2.0)).epsilon(1e-13));
    double rest = 0.0;
    for (std::size_t i = 0; i < c.coeffs.size(); ++i)
      if (i != m) rest = std::max(rest, std::fabs(c.coeffs[i]));
    CHECK(rest <= 1e-12);
  }

  SUBCASE("round trip and Parseval on random band-limited fields") {
    for (auto geom : {t2, s4}) {
      SpectralField u = random_state(geom, 321, 1.0);
      GridField g = to_grid(u);
      SpectralField back = to_spectral(g);
      double err = 0.0;
      for (std::size_t m = 0; m < u.coeffs.size(); ++m)
        err = std::max(err, std::fabs(back.coeffs[m] - u.coeffs[m]));
      CHECK(err <= 1e-10);

      std::vector<double> g2(g.values.size());
      kernels::active().mul(g.values.data(), g.values.data(), g2.data(), g2.size());
      const double quad = integrate(GridField{geom, g2});
      double parseval = 0.0;
      for (double c : u.coeffs) parseval += c * c;
      CHECK(quad == doctest::Approx(parseval).epsilon(1e-10));
    }
  }

  SUBCASE("grid round trip through the fine grid is lossless") {
    for (auto geom : {t2, s4}) {
      SpectralField u = random_state(geom, 55, 0.7);
      std::vector<double> fine(geom->fine_node_count());
      geom->to_fine_grid(u.coeffs.data(), fine.data());
      SpectralField back = zero_spectral(geom);
      geom->fine_to_spectral(fine.data(), back.coeffs.data());
      for (std::size_t m = 0; m < u.coeffs.size(); ++m)
        CHECK(back.coeffs[m] == doctest::Approx(u.coeffs[m]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("integrate: zonal Legendre mode is orthogonal to constants") {
  auto s2 = Geometry::make(GeomKind::kZonalSphere, 2, 32);
  SpectralField p2 = zero_spectral(s2);
  p2.coeffs[s2->sphere_mode(2)] = 1.0;
  CHECK(std::fabs(integrate(to_grid(p2))) <= 1e-13);
  GridField one{s2, std::vector<double>(s2->node_count(), 1.0)};
  auto s4 = Geometry::make(GeomKind::kZonalSphere, 4, 16);
  GridField one4{s4, std::vector<double>(s4->node_count(), 1.0)};
  CHECK(integrate(one4) == doctest::Approx(8.0 * kPi * kPi / 3.0).epsilon(1e-13));
}

TEST_CASE("dilation: identity, Jacobian oracle, volume invariance") {
  auto s4 = Geometry::make(GeomKind::kZonalSphere, 4, 32);

  SUBCASE("r = 1 is the identity") {
    DilationMap id = dilation(s4, Pole::kNorth, 1.0);
    for (double j : id.jacobian) CHECK(j == 1.0);
    SpectralField u = random_state(s4, 9, 0.5);
    GridField ug = to_grid(u);
    GridField w = pullback(ug, id);
    for (std::size_t i = 0; i < w.values.size(); ++i) CHECK(w.values[i] == ug.values[i]);
  }

  SUBCASE("Jacobian matches the stereographic-dilation factor r(1+t^2)/(1+r^2 t^2)") {
    const double r = 2.0;
    DilationMap map = dilation(s4, Pole::kNorth, r);
    for (std::size_t i = 0; i < s4->node_count(); ++i) {
      const double x = s4->node_coord(i, 0);
      const double t2 = (1.0 - x) / (1.0 + x);  // t = tan(theta/2), squared
      const double factor = r * (1.0 + t2) / (1.0 + r * r * t2);
      CHECK(map.jacobian[i] ==
            doctest::Approx(std::pow(factor, 4)).epsilon(1e-12));
    }
    // at the pole t = 0 the factor is r, so det = r^n = 16
    CHECK(std::pow(r * (1.0 + 0.0) / (1.0 + 0.0), 4) == doctest::Approx(16.0));
  }

  SUBCASE("pulled-back volume is invariant") {
    for (auto geom : {Geometry::make(GeomKind::kZonalSphere, 2, 32), s4}) {
      for (double r : {1.5, 3.0}) {
        DilationMap map = dilation(geom, Pole::kSouth, r);
        GridField w = pullback(zero_grid(geom), map);
        std::vector<double> enw(w.values.size());
        kernels::active().exp_scale(w.values.data(), geom->dim(), enw.data(), enw.size());
        CHECK(integrate(GridField{geom, enw}) ==
              doctest::Approx(geom->volume()).epsilon(1e-9));
      }
    }
  }

  SUBCASE("group law: r then s equals rs pointwise") {
    auto s2 = Geometry::make(GeomKind::kZonalSphere, 2, 64);
    // smooth low-band state: the composition must be resolvable at L = 64
    SpectralField u = zero_spectral(s2);
    u.coeffs[s2->sphere_mode(1)] = 0.3;
    u.coeffs[s2->sphere_mode(3)] = -0.2;
    u.coeffs[s2->sphere_mode(6)] = 0.1;
    GridField ug = to_grid(u);
    GridField w_r = pullback(ug, dilation(s2, Pole::kNorth, 2.0));
    GridField w_rs = pullback(w_r, dilation(s2, Pole::kNorth, 1.5));
    GridField w_direct = pullback(ug, dilation(s2, Pole::kNorth, 3.0));
    double err = 0.0;
    for (std::size_t i = 0; i < w_rs.values.size(); ++i)
      err = std::max(err, std::fabs(w_rs.values[i] - w_direct.values[i]));
    CHECK(err <= 1e-8);
  }

  SUBCASE("torus has no dilations") {
    auto t2 = Geometry::make(GeomKind::kTorus, 2, 16);
    CHECK_THROWS_AS(dilation(t2, Pole::kNorth, 2.0), std::invalid_argument);
  }
}

TEST_CASE("center of mass") {
  auto s2 = Geometry::make(GeomKind::kZonalSphere, 2, 32);

  SUBCASE("zero and equatorially symmetric states are centered") {
    CHECK(std::fabs(center_of_mass(zero_grid(s2))[0]) <= 1e-13);
    SpectralField u = zero_spectral(s2);
    u.coeffs[s2->sphere_mode(2)] = 0.4;  // even in x
    CHECK(std::fabs(center_of_mass(to_grid(u))[0]) <= 1e-12);
  }

  SUBCASE("dilation pullback shifts mass toward the pole") {
    GridField w = pullback(zero_grid(s2), dilation(s2, Pole::kNorth, 4.0));
    const double com = center_of_mass(w)[0];
    CHECK(com > 0.0);
    CHECK(com < 1.0);
  }
}

TEST_CASE("spectral tail fraction flags top-band content") {
  auto s2 = Geometry::make(GeomKind::kZonalSphere, 2, 30);
  SpectralField low = zero_spectral(s2);
  low.coeffs[s2->sphere_mode(1)] = 1.0;
  CHECK(spectral_tail_fraction(low) == 0.0);
  SpectralField high = low;
  high.coeffs[s2->sphere_mode(29)] = 0.5;
  CHECK(spectral_tail_fraction(high) == doctest::Approx(0.25 / 1.25).epsilon(1e-12));
}

TEST_CASE("geometry descriptor round-trips the identifying fields") {
  auto g = Geometry::make(GeomKind::kZonalSphere, 4, 20);
  const std::string d = g->descriptor();
  CHECK(d.find("kind = zonal-sphere") != std::string::npos);
  CHECK(d.find("n = 4") != std::string::npos);
  CHECK(d.find("resolution = 20") != std::string::npos);
}

TEST_CASE("a shared geometry transforms safely from concurrent threads") {
  auto geom = Geometry::make(GeomKind::kTorus, 2, 32);
  std::vector<SpectralField> inputs;
  std::vector<GridField> expected;
  for (unsigned seed = 0; seed < 8; ++seed) {
    inputs.push_back(random_state(geom, seed, 1.0));
    expected.push_back(to_grid(inputs.back()));
  }
  std::vector<int> mismatches(4, 0);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      for (int rep = 0; rep < 50; ++rep) {
        const std::size_t i = (w + rep) % inputs.size();
        GridField g = to_grid(inputs[i]);
        SpectralField back = to_spectral(g);
        for (std::size_t j = 0; j < g.values.size(); ++j)
          if (g.values[j] != expected[i].values[j]) ++mismatches[w];
        for (std::size_t m = 0; m < back.coeffs.size(); ++m)
          if (std::fabs(back.coeffs[m] - inputs[i].coeffs[m]) > 1e-12) ++mismatches[w];
      }
    });
  }
  for (auto& t : workers) t.join();
  for (int m : mismatches) CHECK(m == 0);
}
