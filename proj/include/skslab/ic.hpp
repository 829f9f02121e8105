#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "skslab/grid.hpp"
#include "skslab/rng.hpp"
#include "skslab/vec.hpp"

namespace sks {

// Analytic initial-condition families, normalised to mass one and centred so
// C[u_0] = 0; V[u_0] is a closed form and feeds the criteria module without
// quadrature error.
//
//   gaussian:  u = exp(-|x|^2/2s^2) / (2 pi s^2),            V0 = s^2
//   annulus:   u = |x|^2 exp(-|x|^2/2s^2) / (4 pi s^4),      V0 = 2 s^2
//   two_bump:  two half-mass gaussians at (+-d/2, 0),        V0 = s^2 + d^2/8
struct InitialCondition {
  enum class Kind { gaussian, annulus, two_bump };

  Kind kind = Kind::gaussian;
  double scale = 1.0;
  double separation = 0.0;  // two_bump only

  static Kind kind_from_string(const std::string& s) {
    if (s == "gaussian") return Kind::gaussian;
    if (s == "annulus") return Kind::annulus;
    if (s == "two_bump") return Kind::two_bump;
    throw std::invalid_argument("unknown initial condition kind: " + s);
  }

  const char* kind_name() const {
    switch (kind) {
      case Kind::gaussian: return "gaussian";
      case Kind::annulus: return "annulus";
      case Kind::two_bump: return "two_bump";
    }
    return "?";
  }

  void validate() const {
    if (!(scale > 0.0)) throw std::invalid_argument("initial condition: scale must be > 0");
    if (separation < 0.0) throw std::invalid_argument("initial condition: separation must be >= 0");
  }

  double v0() const {
    switch (kind) {
      case Kind::gaussian: return scale * scale;
      case Kind::annulus: return 2.0 * scale * scale;
      case Kind::two_bump: return scale * scale + separation * separation / 8.0;
    }
    return 0.0;
  }

  double density(const Vec2& x) const {
    const double s2 = scale * scale;
    switch (kind) {
      case Kind::gaussian:
        return std::exp(-x.norm2() / (2.0 * s2)) / (2.0 * M_PI * s2);
      case Kind::annulus:
        return x.norm2() * std::exp(-x.norm2() / (2.0 * s2)) / (4.0 * M_PI * s2 * s2);
      case Kind::two_bump: {
        const Vec2 a{0.5 * separation, 0.0};
        const double g1 = std::exp(-(x - a).norm2() / (2.0 * s2));
        const double g2 = std::exp(-(x + a).norm2() / (2.0 * s2));
        return 0.5 * (g1 + g2) / (2.0 * M_PI * s2);
      }
    }
    return 0.0;
  }

  // cell-centre samples, rescaled so the discrete cell-sum mass is exactly 1
  GridField rasterize(int n, double box) const {
    validate();
    GridField u(n, box);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) u(i, j) = density({u.coord(i), u.coord(j)});
    const double m = u.mass();
    if (!(m > 0.0)) throw std::invalid_argument("initial condition: zero mass on grid");
    for (size_t k = 0; k < u.size(); ++k) u.data()[k] /= m;
    return u;
  }

  // i.i.d. sample for the particle oracle, same families
  std::vector<Vec2> sample(Rng& rng, int count) const {
    validate();
    std::vector<Vec2> pts;
    pts.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      switch (kind) {
        case Kind::gaussian:
          pts.push_back(rng.normal2() * scale);
          break;
        case Kind::annulus: {
          // radius^2 / s^2 is chi-square with 4 dof
          const double q = -2.0 * (std::log(rng.uniform01()) + std::log(rng.uniform01()));
          const double r = scale * std::sqrt(q);
          const double th = 2.0 * M_PI * (1.0 - rng.uniform01());
          pts.push_back({r * std::cos(th), r * std::sin(th)});
          break;
        }
        case Kind::two_bump: {
          const double side = (rng.uniform01() <= 0.5) ? -0.5 : 0.5;
          pts.push_back(rng.normal2() * scale + Vec2{side * separation, 0.0});
          break;
        }
      }
    }
    return pts;
  }
};

}  // namespace sks
