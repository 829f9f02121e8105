#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "skslab/rng.hpp"
#include "skslab/vec.hpp"

namespace sks {

enum class RadialKind { single_radius, gaussian, exponential };

inline const char* to_string(RadialKind k) {
  switch (k) {
    case RadialKind::single_radius: return "single_radius";
    case RadialKind::gaussian: return "gaussian";
    case RadialKind::exponential: return "exponential";
  }
  return "?";
}

// Radial spectral density f of the isotropic covariance
//
//   Q(z) = int_{R^2} R(u.z) Pi(u) f(|u|) du,
//   Pi(u) = (1-p) Id + (2p-1) u (x) u / |u|^2,
//
// normalised so that int_0^inf r f(r) dr = 1/pi, which makes Q(0) = Id.
// The families are analytic, so the normalisation constant and the second
// moment int |u|^2 f(|u|) du are closed forms; quadrature only re-checks them.
struct CovarianceSpec {
  RadialKind kind = RadialKind::single_radius;
  double param = 1.0;  // single_radius: the radius r0; gaussian/exponential: scale s
  double p = 0.0;      // incompressibility parameter of the Example's projector

  static CovarianceSpec make(RadialKind kind, double param, double p = 0.0) {
    CovarianceSpec s{kind, param, p};
    s.validate();
    return s;
  }

  void validate() const {
    if (!(param > 0.0) || !std::isfinite(param))
      throw std::invalid_argument(
          "CovarianceSpec: density has no support on admissible wavevectors (param must be > 0)");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("CovarianceSpec: p must lie in [0,1]");
  }

  // normalised density value (smooth families only)
  double density(double r) const {
    switch (kind) {
      case RadialKind::gaussian:
        return std::exp(-r * r / (2.0 * param * param)) / (M_PI * param * param);
      case RadialKind::exponential:
        return std::exp(-r / param) / (M_PI * param * param);
      case RadialKind::single_radius:
        throw std::logic_error("CovarianceSpec: single_radius has no pointwise density");
    }
    return 0.0;
  }

  // int_0^inf r f(r) dr, closed form; equals 1/pi for every family
  double radial_mass() const { return 1.0 / M_PI; }

  // int_{R^2} |u|^2 f(|u|) du, closed form; finite for every family
  double second_moment() const {
    switch (kind) {
      case RadialKind::single_radius: return 2.0 * param * param;
      case RadialKind::gaussian: return 4.0 * param * param;
      case RadialKind::exponential: return 12.0 * param * param;
    }
    return 0.0;
  }

  // quantile of the radius distribution with density pi * r f(r)
  double radius_quantile(double q) const {
    switch (kind) {
      case RadialKind::single_radius: return param;
      case RadialKind::gaussian: return param * std::sqrt(-2.0 * std::log1p(-q));
      case RadialKind::exponential: {
        // CDF 1 - (1 + r/s) exp(-r/s), solved by bisection
        double lo = 0.0, hi = param;
        auto cdf = [&](double r) { return 1.0 - (1.0 + r / param) * std::exp(-r / param); };
        while (cdf(hi) < q) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          (cdf(mid) < q ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
      }
    }
    return param;
  }

  static RadialKind kind_from_string(const std::string& s) {
    if (s == "single_radius") return RadialKind::single_radius;
    if (s == "gaussian") return RadialKind::gaussian;
    if (s == "exponential") return RadialKind::exponential;
    throw std::invalid_argument("unknown radial density kind: " + s);
  }
};

struct NoiseMode {
  Vec2 wavevector;    // lattice compatible: (2 pi / L) * integer pair
  Vec2 polarization;  // unit, exactly perpendicular to the wavevector
  double amplitude = 0.0;
  bool is_sine = false;

  Vec2 eval(const Vec2& x) const {
    const double phase = wavevector.dot(x);
    const double t = is_sine ? std::sin(phase) : std::cos(phase);
    return polarization * (amplitude * t);
  }
};

// Finite divergence-free mode family synthesising the isotropic covariance.
//
// Modes come in groups of four: (cos, sin) at a wavevector u plus (cos, sin)
// at its quarter turn Ru, sharing one amplitude. The cos/sin pair makes
// q(x,y) depend on x-y only; the u/Ru pair makes sum_k s_k (x) s_k = Id
// pointwise once the group amplitudes are normalised to sum of squares one.
// Both identities then hold exactly, not just in quadrature.
class NoiseModel {
 public:
  static NoiseModel build(const CovarianceSpec& spec, int mode_count, double box_size,
                          double gamma = 0.0) {
    spec.validate();
    if (mode_count < 1) throw std::invalid_argument("build_noise_model: mode_count must be >= 1");
    if (!(box_size > 0.0)) throw std::invalid_argument("build_noise_model: box_size must be > 0");
    if (spec.p != 0.0)
      throw std::invalid_argument(
          "build_noise_model: divergence-free synthesis requires p = 0 (solenoidal projector)");

    const int groups = (mode_count + 3) / 4;  // rounded up to whole groups
    const double base = 2.0 * M_PI / box_size;

    std::vector<Vec2> wavevectors;
    wavevectors.reserve(groups);
    for (int g = 0; g < groups; ++g) {
      const double q = (g + 0.5) / groups;
      const double r = spec.radius_quantile(q);
      // golden-ratio angle sequence spreads directions over the quarter circle
      const double frac = std::fmod(g * 0.6180339887498949, 1.0);
      const double theta = frac * 0.5 * M_PI;
      wavevectors.push_back(snap_to_lattice(r, theta, base));
    }

    // exact renormalisation: group weights scaled so sum a_g^2 = 1
    std::vector<double> amp(groups, 1.0 / std::sqrt(static_cast<double>(groups)));
    double total = 0.0;
    for (double a : amp) total += a * a;
    const double fix = 1.0 / std::sqrt(total);
    for (double& a : amp) a *= fix;

    NoiseModel model;
    model.box_ = box_size;
    model.gamma_ = gamma;
    for (int g = 0; g < groups; ++g) {
      const Vec2 u = wavevectors[g];
      const Vec2 e = u.perp() / u.norm();
      const Vec2 ru = u.perp();
      const Vec2 re = ru.perp() / ru.norm();
      model.modes_.push_back({u, e, amp[g], false});
      model.modes_.push_back({u, e, amp[g], true});
      model.modes_.push_back({ru, re, amp[g], false});
      model.modes_.push_back({ru, re, amp[g], true});
    }
    return model;
  }

  // Spatially constant family (wavevector zero): two orthogonal unit fields.
  // Q(z) = Id for every z, so C_sigma = 0.
  static NoiseModel constant(double gamma = 0.0) {
    NoiseModel model;
    model.box_ = 0.0;
    model.gamma_ = gamma;
    model.modes_.push_back({{0.0, 0.0}, {1.0, 0.0}, 1.0, false});
    model.modes_.push_back({{0.0, 0.0}, {0.0, 1.0}, 1.0, false});
    return model;
  }

  int mode_count() const { return static_cast<int>(modes_.size()); }
  const std::vector<NoiseMode>& modes() const { return modes_; }
  double box() const { return box_; }
  double gamma() const { return gamma_; }

  Vec2 sigma(int k, const Vec2& x) const {
    if (k < 0 || k >= mode_count()) throw std::out_of_range("evaluate_sigma: mode index");
    return modes_[static_cast<size_t>(k)].eval(x);
  }

  std::vector<Vec2> evaluate_sigma(int k, std::span<const Vec2> points) const {
    std::vector<Vec2> out;
    out.reserve(points.size());
    for (const Vec2& x : points) out.push_back(sigma(k, x));
    return out;
  }

  // q(x,y) = sum_k sigma_k(x) (x) sigma_k(y), evaluated mode by mode
  Mat2 empirical_q(const Vec2& x, const Vec2& y) const {
    Mat2 q;
    for (const auto& m : modes_) q += Mat2::outer(m.eval(x), m.eval(y));
    return q;
  }

  std::vector<Mat2> empirical_covariance(std::span<const Vec2> displacements,
                                         const Vec2& base_point = {0.0, 0.0}) const {
    std::vector<Mat2> out;
    out.reserve(displacements.size());
    for (const Vec2& z : displacements) out.push_back(empirical_q(base_point, base_point + z));
    return out;
  }

  // Q(z) through the group closed form: cos/sin pairs collapse to cos(u.z)
  Mat2 covariance(const Vec2& z) const {
    Mat2 q;
    for (const auto& m : modes_) {
      if (m.is_sine) continue;
      q += Mat2::outer(m.polarization, m.polarization) *
           (m.amplitude * m.amplitude * std::cos(m.wavevector.dot(z)));
    }
    return q;
  }

  double trace_covariance(const Vec2& z) const {
    double t = 0.0;
    for (const auto& m : modes_) {
      if (m.is_sine) continue;
      t += m.amplitude * m.amplitude * std::cos(m.wavevector.dot(z));
    }
    return t;
  }

  // Exact C_sigma of the synthesised family. With cos/sin pairs,
  // sum_k |s_k(x)-s_k(y)|^2 = 2 sum_w a_w^2 (1 - cos(u_w.(x-y))) over the
  // wavevector set, and 1 - cos(t) <= t^2/2 puts the supremum at z -> 0:
  // C_sigma = (1/2) sum_w a_w^2 |u_w|^2.
  double c_sigma_analytic() const {
    double s = 0.0;
    for (const auto& m : modes_) {
      if (m.is_sine) continue;
      s += m.amplitude * m.amplitude * m.wavevector.norm2();
    }
    return 0.5 * s;
  }

 private:
  std::vector<NoiseMode> modes_;
  double box_ = 0.0;
  double gamma_ = 0.0;

  // Nearest lattice wavevector: radius mismatch first, then angular distance
  // to the target direction, then lexicographic order for determinism.
  static Vec2 snap_to_lattice(double r, double theta, double base) {
    const double rho = r / base;
    const int reach = static_cast<int>(std::ceil(rho)) + 3;
    double best_dr = 0.0, best_da = 0.0;
    int best_mx = 0, best_my = 0;
    bool found = false;
    for (int mx = -reach; mx <= reach; ++mx) {
      for (int my = -reach; my <= reach; ++my) {
        if (mx == 0 && my == 0) continue;
        const double rad = std::hypot(static_cast<double>(mx), static_cast<double>(my));
        const double dr = std::fabs(rad - rho);
        double ang = std::atan2(static_cast<double>(my), static_cast<double>(mx));
        // directions are identified up to sign
        double da = std::fabs(std::remainder(ang - theta, M_PI));
        const bool better =
            !found || dr < best_dr - 1e-12 ||
            (std::fabs(dr - best_dr) <= 1e-12 &&
             (da < best_da - 1e-12 ||
              (std::fabs(da - best_da) <= 1e-12 &&
               (mx < best_mx || (mx == best_mx && my < best_my)))));
        if (better) {
          found = true;
          best_dr = dr;
          best_da = da;
          best_mx = mx;
          best_my = my;
        }
      }
    }
    // canonical half plane representative
    if (best_mx < 0 || (best_mx == 0 && best_my < 0)) {
      best_mx = -best_mx;
      best_my = -best_my;
    }
    return {best_mx * base, best_my * base};
  }
};

struct CSigmaEstimate {
  double value = 0.0;
  int grid_resolution = 0;
  bool converged = false;
};

namespace detail {

inline double c_sigma_grid_sup(const NoiseModel& model, int res, double span, Vec2* argmax) {
  const double h = span / res;
  double sup = 0.0;
  for (int i = -res / 2; i < res / 2; ++i) {
    for (int j = -res / 2; j < res / 2; ++j) {
      if (i == 0 && j == 0) continue;
      const Vec2 z{i * h, j * h};
      const double val = (4.0 - 2.0 * model.trace_covariance(z)) / z.norm2();
      if (val > sup) {
        sup = val;
        if (argmax) *argmax = z;
      }
    }
  }
  return sup;
}

}  // namespace detail

// Grid supremum of (4 - 2 Tr Q(z)) / |z|^2 = sum_k |s_k(x) - s_k(y)|^2 / |x-y|^2,
// followed by a small-z directional sweep (the supremum of the synthesised
// family is attained in the z -> 0 limit). The convergence flag compares the
// plain grid pass against one at doubled resolution.
inline CSigmaEstimate estimate_c_sigma(const NoiseModel& model, int grid_resolution) {
  if (grid_resolution < 8) throw std::invalid_argument("estimate_c_sigma: grid_resolution >= 8");
  const double span = model.box() > 0.0 ? model.box() : 2.0 * M_PI;

  Vec2 argmax{span / grid_resolution, 0.0};
  const double coarse = detail::c_sigma_grid_sup(model, grid_resolution, span, &argmax);
  const double fine = detail::c_sigma_grid_sup(model, 2 * grid_resolution, span, nullptr);

  double sup = std::max(coarse, fine);
  const Vec2 dirs[] = {argmax / std::max(argmax.norm(), 1e-300), {1.0, 0.0}, {0.0, 1.0},
                       {M_SQRT1_2, M_SQRT1_2}};
  for (const Vec2& d : dirs) {
    double step = span / grid_resolution;
    for (int j = 0; j < 48; ++j) {
      step *= 0.5;
      const Vec2 z = d * step;
      if (z.norm2() == 0.0) break;
      sup = std::max(sup, (4.0 - 2.0 * model.trace_covariance(z)) / z.norm2());
    }
  }

  CSigmaEstimate est;
  est.value = sup;
  est.grid_resolution = grid_resolution;
  est.converged = (sup == 0.0) || (std::fabs(fine - coarse) <= 0.01 * std::fabs(sup));
  return est;
}

struct LowerBoundCheck {
  bool ok = true;
  double worst_margin = 0.0;  // min over pairs of lhs - rhs
  Vec2 x, y;
};

// sum_k sigma_k(x).sigma_k(y) >= 2 - (1/2) C_sigma |x-y|^2 on random pairs
inline LowerBoundCheck check_lower_bound(const NoiseModel& model, double c_sigma,
                                         int sample_pairs, std::uint64_t seed = 0x10D5) {
  Rng rng(derive_stream(seed, stream::sampling));
  const double half = 0.5 * (model.box() > 0.0 ? model.box() : 2.0 * M_PI);
  LowerBoundCheck out;
  bool first = true;
  for (int s = 0; s < sample_pairs; ++s) {
    const Vec2 x{rng.uniform(-half, half), rng.uniform(-half, half)};
    const Vec2 y{rng.uniform(-half, half), rng.uniform(-half, half)};
    double lhs = 0.0;
    for (int k = 0; k < model.mode_count(); ++k) lhs += model.sigma(k, x).dot(model.sigma(k, y));
    const double rhs = 2.0 - 0.5 * c_sigma * (x - y).norm2();
    const double margin = lhs - rhs;
    if (first || margin < out.worst_margin) {
      first = false;
      out.worst_margin = margin;
      out.x = x;
      out.y = y;
    }
  }
  out.ok = out.worst_margin >= -1e-9;
  return out;
}

// Direct quadrature of the Example covariance, any p: polar coordinates,
// Gauss-Legendre in radius, trapezoid in angle. Test oracle for the
// synthesised covariance (p = 0) and the general-p utility path.
inline Mat2 covariance_integral(const CovarianceSpec& spec, const Vec2& z, int radial_nodes = 96,
                                int angular_nodes = 512) {
  auto angular = [&](double r, double weight, Mat2& acc) {
    for (int a = 0; a < angular_nodes; ++a) {
      const double phi = 2.0 * M_PI * a / angular_nodes;
      const Vec2 omega{std::cos(phi), std::sin(phi)};
      const Vec2 u = omega * r;
      const double th = u.dot(z);
      const double ct = std::cos(th), st = std::sin(th);
      const Mat2 rot{ct, -st, st, ct};
      Mat2 pi = Mat2::identity() * (1.0 - spec.p) + Mat2::outer(omega, omega) * (2.0 * spec.p - 1.0);
      // rot * pi
      Mat2 m{rot.a11 * pi.a11 + rot.a12 * pi.a21, rot.a11 * pi.a12 + rot.a12 * pi.a22,
             rot.a21 * pi.a11 + rot.a22 * pi.a21, rot.a21 * pi.a12 + rot.a22 * pi.a22};
      acc += m * (weight * 2.0 * M_PI / angular_nodes);
    }
  };

  Mat2 q;
  if (spec.kind == RadialKind::single_radius) {
    // f = delta at r0 with radial mass 1/pi
    angular(spec.param, 1.0 / M_PI, q);
    return q;
  }
  // Gauss-Legendre on [0, r_cut]
  const double r_cut = spec.radius_quantile(1.0 - 1e-13);
  std::vector<double> xg(radial_nodes), wg(radial_nodes);
  // Newton iteration on Legendre polynomials
  for (int i = 0; i < radial_nodes; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (radial_nodes + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= radial_nodes; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = radial_nodes * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= radial_nodes; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = radial_nodes * (x * p1 - p0) / (x * x - 1.0);
    xg[i] = x;
    wg[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  for (int i = 0; i < radial_nodes; ++i) {
    const double r = 0.5 * r_cut * (xg[i] + 1.0);
    const double w = 0.5 * r_cut * wg[i] * spec.density(r) * r;
    angular(r, w, q);
  }
  return q;
}

}  // namespace sks
