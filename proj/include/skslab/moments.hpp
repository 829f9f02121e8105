#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "skslab/grid.hpp"
#include "skslab/spectral.hpp"
#include "skslab/vec.hpp"

namespace sks {

enum class PathStatus { running, completed, blown_up, boundary_breach };

inline const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::running: return "running";
    case PathStatus::completed: return "completed";
    case PathStatus::blown_up: return "blown_up";
    case PathStatus::boundary_breach: return "boundary_breach";
  }
  return "?";
}

struct Moments {
  double mass = 0.0;
  Vec2 center;       // C[u] = int x u dx
  double v = 0.0;    // V[u] = (1/2) int |x - C|^2 u dx
  double l2 = 0.0;   // ||u||_{L^2}
  double s_neg = 0.0;  // ||u^-||_{L^2}^2
  double linf = 0.0;
};

// Cell-sum quadrature, the same weights the solver uses for its mass
// functional. V comes from the identity V = (1/2) int |x|^2 u - (1/2)|C|^2.
inline Moments compute_moments(const GridField& u) {
  const int n = u.n();
  const double h2 = u.cell_area();
  double mass = 0.0, mx = 0.0, my = 0.0, mr2 = 0.0, l2 = 0.0, sneg = 0.0, linf = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = u.coord(i);
    for (int j = 0; j < n; ++j) {
      const double y = u.coord(j);
      const double w = u(i, j);
      mass += w;
      mx += x * w;
      my += y * w;
      mr2 += (x * x + y * y) * w;
      l2 += w * w;
      if (w < 0.0) sneg += w * w;
      linf = std::fmax(linf, std::fabs(w));
    }
  }
  Moments m;
  m.mass = mass * h2;
  m.center = {mx * h2, my * h2};
  m.v = 0.5 * mr2 * h2 - 0.5 * m.center.norm2();
  m.l2 = std::sqrt(l2 * h2);
  m.s_neg = sneg * h2;
  m.linf = linf;
  return m;
}

// One recorded sample along a path. A and B are the noise-integral
// accumulators, kept with the exact Brownian increments the stepper used:
//   A_t = sqrt(2 gamma) sum_k int_0^t <sigma_k, u_s> dW^k_s   (vector)
//   B_t = sqrt(2 gamma) sum_k int_0^t <x.sigma_k, u_s> dW^k_s (scalar)
struct MomentSample {
  double t = 0.0;
  Moments m;
  Vec2 acc_a;
  double acc_b = 0.0;
  PathStatus status = PathStatus::running;
  bool has_accumulators = false;
};

struct MomentSeries {
  std::vector<MomentSample> rows;

  bool empty() const { return rows.empty(); }
  const MomentSample& front() const { return rows.front(); }
  const MomentSample& back() const { return rows.back(); }
};

// R_C(t) = C[u_t] - C[u_0] + A_t; the center-of-mass identity says
// C[u_t] = C[u_0] - A_t pathwise, so this should sit at discretisation level.
inline std::vector<Vec2> com_identity_residual(const MomentSeries& series) {
  if (series.empty()) throw std::invalid_argument("com_identity_residual: empty series");
  std::vector<Vec2> out;
  out.reserve(series.rows.size());
  const Vec2 c0 = series.front().m.center;
  for (const auto& row : series.rows) {
    if (!row.has_accumulators)
      throw std::invalid_argument("com_identity_residual: missing accumulators");
    out.push_back(row.m.center - c0 + row.acc_a);
  }
  return out;
}

// R_V(t) = V[u_t] - V[u_0] - (2(1+gamma) - chi/4pi) t + |C[u_t]|^2/2 + B_t
inline std::vector<double> var_identity_residual(const MomentSeries& series, double chi,
                                                 double gamma) {
  if (series.empty()) throw std::invalid_argument("var_identity_residual: empty series");
  std::vector<double> out;
  out.reserve(series.rows.size());
  const double v0 = series.front().m.v;
  const double slope = 2.0 * (1.0 + gamma) - chi / (4.0 * M_PI);
  for (const auto& row : series.rows) {
    if (!row.has_accumulators)
      throw std::invalid_argument("var_identity_residual: missing accumulators");
    out.push_back(row.m.v - v0 - slope * row.t + 0.5 * row.m.center.norm2() + row.acc_b);
  }
  return out;
}

struct DriftBoundCheck {
  bool ok = false;
  double lhs = 0.0;        // ||grad c||_inf
  double rhs = 0.0;        // ||u||_1^{1/4} ||u||_2^{1/2} |u|_{H^1}^{1/4}
  double calibrated = 0.0; // C_cal * rhs
};

// Calibration constant for the grad-c sup bound, fitted once on the isotropic
// Gaussian family (where the ratio lhs/rhs is scale invariant with the
// gradient seminorm) and frozen with a factor-2 margin for non-Gaussian
// profiles. Diagnostic only.
inline constexpr double kDriftBoundCalibration = 0.3711;

inline DriftBoundCheck drift_bound_check(SpectralWorkspace& ws, const GridField& u) {
  if (!u.finite()) throw std::invalid_argument("drift_bound_check: non-finite field");
  DriftBoundCheck out;
  const VectorField gc = ws.solve_chemical(u, ChemicalMethod::free_space_padded);
  const int n = u.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out.lhs = std::fmax(out.lhs, std::hypot(gc.x(i, j), gc.y(i, j)));

  double l1 = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) l1 += std::fabs(u(i, j));
  l1 *= u.cell_area();
  const double l2 = u.l2_norm();
  const VectorField gu = ws.gradient(u);
  double grad2 = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) grad2 += gu.x(i, j) * gu.x(i, j) + gu.y(i, j) * gu.y(i, j);
  grad2 *= u.cell_area();

  out.rhs = std::pow(l1, 0.25) * std::sqrt(l2) * std::pow(grad2, 0.125);
  out.calibrated = kDriftBoundCalibration * out.rhs;
  out.ok = out.lhs <= out.calibrated;
  return out;
}

}  // namespace sks
