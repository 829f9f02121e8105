#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skslab/covariance.hpp"
#include "skslab/grid.hpp"
#include "skslab/ic.hpp"
#include "skslab/rng.hpp"
#include "skslab/spectral.hpp"

using namespace sks;

namespace {

// random smooth field: a handful of low modes with fixed coefficients
GridField smooth_field(int n, double box, std::uint64_t seed, int max_mode = 5) {
  GridField f(n, box);
  Rng rng(seed);
  struct Mode {
    double kx, ky, amp, phase;
  };
  std::vector<Mode> modes;
  for (int mx = 0; mx <= max_mode; ++mx)
    for (int my = -max_mode; my <= max_mode; ++my) {
      if (mx == 0 && my <= 0) continue;
      modes.push_back({2.0 * M_PI * mx / box, 2.0 * M_PI * my / box, rng.normal() / (1.0 + mx * mx + my * my),
                       2.0 * M_PI * rng.uniform01()});
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double v = 0.0;
      for (const auto& m : modes) v += m.amp * std::cos(m.kx * f.coord(i) + m.ky * f.coord(j) + m.phase);
      f(i, j) = v;
    }
  return f;
}

}  // namespace

TEST_CASE("grid field validates shape") {
  REQUIRE_THROWS_AS(GridField(48, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(GridField(16, 1.0), std::invalid_argument);
  REQUIRE_NOTHROW(GridField(32, 1.0));
}

TEST_CASE("laplacian eigenfunction") {
  const int n = 64;
  const double L = 2.0;
  GridField f(n, L);
  const double k = 2.0 * M_PI / L;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f(i, j) = std::cos(k * f.coord(i));
  SpectralWorkspace ws(n, L);
  const GridField lap = ws.laplacian(f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      REQUIRE(lap(i, j) == Catch::Approx(-k * k * f(i, j)).margin(1e-10));
}

TEST_CASE("divergence of gradient equals laplacian") {
  const int n = 64;
  const double L = 3.7;
  GridField f = smooth_field(n, L, 11);
  SpectralWorkspace ws(n, L);
  const VectorField g = ws.gradient(f);
  const GridField dg = ws.divergence(g);
  const GridField lap = ws.laplacian(f);
  double scale = 0.0, err = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      scale = std::fmax(scale, std::fabs(lap(i, j)));
      err = std::fmax(err, std::fabs(dg(i, j) - lap(i, j)));
    }
  REQUIRE(err < 1e-12 * scale);
}

TEST_CASE("spectral operators are mass neutral") {
  const int n = 64;
  const double L = 5.0;
  GridField f = smooth_field(n, L, 3);
  f(5, 9) += 0.5;  // break smoothness, mean neutrality must survive
  SpectralWorkspace ws(n, L);
  REQUIRE(std::fabs(ws.laplacian(f).mean()) < 1e-13);
  VectorField v(n, L);
  v.x = smooth_field(n, L, 4);
  v.y = smooth_field(n, L, 5);
  REQUIRE(std::fabs(ws.divergence(v).mean()) < 1e-13);
}

TEST_CASE("dealias keeps low modes and kills the top band") {
  const int n = 64;
  const double L = 1.0;
  SpectralWorkspace ws(n, L);

  GridField low = smooth_field(n, L, 7, 5);
  const GridField low2 = ws.dealias(low, DealiasRule::two_thirds);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) REQUIRE(low2(i, j) == Catch::Approx(low(i, j)).margin(1e-12));

  GridField top(n, L);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      top(i, j) = std::cos(2.0 * M_PI * (n / 2 - 1) * top.coord(i) / L);
  const GridField gone = ws.dealias(top, DealiasRule::two_thirds);
  REQUIRE(gone.linf() < 1e-12);
}

TEST_CASE("dealiased product of band-limited fields has no energy above cutoff") {
  const int n = 64;
  const double L = 1.0;
  SpectralWorkspace ws(n, L);
  GridField a = ws.dealias(smooth_field(n, L, 21, 12), DealiasRule::two_thirds);
  GridField b = ws.dealias(smooth_field(n, L, 22, 12), DealiasRule::two_thirds);
  GridField prod(n, L);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) prod(i, j) = a(i, j) * b(i, j);
  GridField clean = ws.dealias(prod, DealiasRule::two_thirds);
  REQUIRE(ws.max_active_mode(clean, 1e-13) <= n / 3);
}

TEST_CASE("free-space solver reproduces the point-mass kernel") {
  const int n = 128;
  const double L = 8.0;
  GridField u(n, L);
  const double h = u.spacing();
  u(n / 2, n / 2) = 1.0 / (h * h);  // unit mass in one cell at the origin
  SpectralWorkspace ws(n, L);
  const VectorField gc = ws.solve_chemical(u, ChemicalMethod::free_space_padded);

  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 x{u.coord(i), u.coord(j)};
      const double r = x.norm();
      if (r < 8.0 * h || r > 0.25 * L) continue;
      const Vec2 expected = x * (-1.0 / (2.0 * M_PI * r * r));
      const double err = std::hypot(gc.x(i, j) - expected.x, gc.y(i, j) - expected.y);
      worst = std::fmax(worst, err / expected.norm());
    }
  REQUIRE(worst < 0.02);
}

TEST_CASE("periodic solver kills constants") {
  const int n = 64;
  const double L = 4.0;
  GridField u(n, L);
  u.fill(3.14);
  SpectralWorkspace ws(n, L);
  const VectorField gc = ws.solve_chemical(u, ChemicalMethod::periodic_spectral);
  REQUIRE(gc.x.linf() < 1e-14);
  REQUIRE(gc.y.linf() < 1e-14);
}

TEST_CASE("radial blob gives an antisymmetric attraction field") {
  const int n = 64;
  const double L = 12.0;
  InitialCondition ic;
  ic.kind = InitialCondition::Kind::gaussian;
  ic.scale = 0.8;
  GridField u = ic.rasterize(n, L);
  SpectralWorkspace ws(n, L);
  for (auto method : {ChemicalMethod::free_space_padded, ChemicalMethod::periodic_spectral}) {
    const VectorField gc = ws.solve_chemical(u, method);
    double err = 0.0;
    for (int i = 1; i < n; ++i)
      for (int j = 1; j < n; ++j) {
        // grid point -x of (i, j) is (n - i, n - j)
        err = std::fmax(err, std::fabs(gc.x(i, j) + gc.x(n - i, n - j)));
        err = std::fmax(err, std::fabs(gc.y(i, j) + gc.y(n - i, n - j)));
      }
    REQUIRE(err < 1e-10);
  }
}

TEST_CASE("chemical gradient is curl free") {
  const int n = 64;
  const double L = 6.0;
  GridField u = smooth_field(n, L, 9);
  for (size_t k = 0; k < u.size(); ++k) u.data()[k] = std::fabs(u.data()[k]);
  SpectralWorkspace ws(n, L);
  const VectorField gc = ws.solve_chemical(u, ChemicalMethod::periodic_spectral);
  const GridField c = ws.curl(gc);
  REQUIRE(c.linf() < 1e-12 * std::fmax(gc.x.linf(), gc.y.linf()));
}

TEST_CASE("free-space and periodic gradients agree for concentrated mass") {
  const int n = 128;
  const double L = 16.0;
  InitialCondition ic;
  ic.kind = InitialCondition::Kind::gaussian;
  ic.scale = 1.0;
  GridField u = ic.rasterize(n, L);
  SpectralWorkspace ws(n, L);
  const VectorField a = ws.solve_chemical(u, ChemicalMethod::free_space_padded);
  const VectorField b = ws.solve_chemical(u, ChemicalMethod::periodic_spectral);
  // The solvers only differ through the periodic images and the neutralising
  // background, both of which grow with radius; what the dynamics feels is
  // the flux u grad c, so compare in the mass-weighted L2 sense.
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = u(i, j);
      const double dx = a.x(i, j) - b.x(i, j);
      const double dy = a.y(i, j) - b.y(i, j);
      num += w * (dx * dx + dy * dy);
      den += w * (a.x(i, j) * a.x(i, j) + a.y(i, j) * a.y(i, j));
    }
  REQUIRE(std::sqrt(num / den) < 0.05);
}

TEST_CASE("synthesised noise modes are divergence free on the grid") {
  const int n = 64;
  const double L = 16.0;
  const CovarianceSpec spec = CovarianceSpec::make(RadialKind::single_radius, 1.0);
  const NoiseModel model = NoiseModel::build(spec, 16, L);
  SpectralWorkspace ws(n, L);
  GridField fx(n, L), fy(n, L);
  for (int k = 0; k < model.mode_count(); ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Vec2 s = model.sigma(k, {fx.coord(i), fx.coord(j)});
        fx(i, j) = s.x;
        fy(i, j) = s.y;
      }
    const GridField div = ws.divergence(VectorField(fx, fy));
    REQUIRE(div.linf() < 1e-12);
  }
}

TEST_CASE("solve_chemical rejects non-finite input") {
  const int n = 32;
  GridField u(n, 1.0);
  u(3, 3) = std::numeric_limits<double>::quiet_NaN();
  SpectralWorkspace ws(n, 1.0);
  REQUIRE_THROWS_AS(ws.solve_chemical(u, ChemicalMethod::free_space_padded), std::invalid_argument);
}
