#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

namespace sks {

enum class BlowUpRegime { as_blowup, positive_prob_blowup, no_criterion };

inline const char* to_string(BlowUpRegime r) {
  switch (r) {
    case BlowUpRegime::as_blowup: return "as_blowup";
    case BlowUpRegime::positive_prob_blowup: return "positive_prob_blowup";
    case BlowUpRegime::no_criterion: return "no_criterion";
  }
  return "?";
}

// Closed forms of the blow-up theorem:
//   chi_as = (1+gamma) 8 pi                    -> almost sure blow-up
//   chi_pp = (1 + gamma V0 C_sigma) 8 pi       -> positive probability
//   T1 = 4 pi V0 / (chi - (1+gamma) 8 pi)
//   T2 = [log(chi - 8 pi) - log(chi - 8 pi gamma C_sigma V0 - 8 pi)] / (2 gamma C_sigma)
// with T2 -> 4 pi V0 / (chi - 8 pi) as C_sigma -> 0 (spatially homogeneous
// noise reduces to the deterministic criterion after a change of variables).
struct CriteriaReport {
  double chi = 0.0;
  double gamma = 0.0;
  double v0 = 0.0;
  double c_sigma = 0.0;
  double chi_as = 0.0;
  double chi_pp = 0.0;
  std::optional<double> t1;
  std::optional<double> t2;
  std::optional<double> t_star;
  BlowUpRegime regime = BlowUpRegime::no_criterion;
};

inline CriteriaReport evaluate_criteria(double chi, double gamma, double v0, double c_sigma) {
  if (!(chi > 0.0)) throw std::domain_error("evaluate_criteria: chi must be > 0");
  if (!(gamma >= 0.0)) throw std::domain_error("evaluate_criteria: gamma must be >= 0");
  if (!(v0 > 0.0)) throw std::domain_error("evaluate_criteria: V[u0] must be > 0");
  if (!(c_sigma >= 0.0)) throw std::domain_error("evaluate_criteria: C_sigma must be >= 0");

  const double eight_pi = 8.0 * M_PI;
  CriteriaReport r;
  r.chi = chi;
  r.gamma = gamma;
  r.v0 = v0;
  r.c_sigma = c_sigma;
  r.chi_as = (1.0 + gamma) * eight_pi;
  r.chi_pp = (1.0 + gamma * v0 * c_sigma) * eight_pi;

  if (chi > r.chi_as) r.t1 = 4.0 * M_PI * v0 / (chi - r.chi_as);

  if (chi > r.chi_pp) {
    if (gamma == 0.0 || c_sigma == 0.0) {
      // analytic C_sigma -> 0 limit of the log difference
      r.t2 = 4.0 * M_PI * v0 / (chi - eight_pi);
    } else {
      // log(chi-8pi) - log(chi-8pi - 8pi gamma C V0) = -log1p(-x), stable for
      // small C_sigma
      const double x = eight_pi * gamma * c_sigma * v0 / (chi - eight_pi);
      r.t2 = -std::log1p(-x) / (2.0 * gamma * c_sigma);
    }
  }

  if (r.t1 && r.t2)
    r.t_star = std::fmin(*r.t1, *r.t2);
  else if (r.t1)
    r.t_star = r.t1;
  else if (r.t2)
    r.t_star = r.t2;

  if (chi > r.chi_as)
    r.regime = BlowUpRegime::as_blowup;
  else if (chi > r.chi_pp)
    r.regime = BlowUpRegime::positive_prob_blowup;
  else
    r.regime = BlowUpRegime::no_criterion;
  return r;
}

// Exponential bound on E[V[u_t]] from the Gronwall chain:
//   E[V[u_t]] <= (V0 - beta) exp(2 gamma C_sigma t) + beta,
//   beta = (chi/4pi - 2) / (2 gamma C_sigma).
// Its root is T2 by construction. For C_sigma = 0 the bound degenerates to
// the linear V0 + (2 - chi/4pi) t.
inline double gronwall_envelope(double chi, double gamma, double v0, double c_sigma, double t) {
  if (!(chi > 0.0) || !(gamma >= 0.0) || !(v0 > 0.0) || !(c_sigma >= 0.0))
    throw std::domain_error("gronwall_envelope: invalid parameters");
  if (gamma == 0.0 || c_sigma == 0.0) return v0 + (2.0 - chi / (4.0 * M_PI)) * t;
  const double a = 2.0 * gamma * c_sigma;
  const double beta = (chi / (4.0 * M_PI) - 2.0) / a;
  return (v0 - beta) * std::exp(a * t) + beta;
}

enum class TimeOrdering { t1_smaller, t2_smaller, tie, undefined };

inline const char* to_string(TimeOrdering o) {
  switch (o) {
    case TimeOrdering::t1_smaller: return "T1_smaller";
    case TimeOrdering::t2_smaller: return "T2_smaller";
    case TimeOrdering::tie: return "tie";
    case TimeOrdering::undefined: return "undefined";
  }
  return "?";
}

// T* respects the ordering of V0 C_sigma and 1: T* = T2 when V0 C_sigma < 1,
// T* = T1 when V0 C_sigma > 1. Equality is reported as a numerical tie.
inline TimeOrdering ordering_check(double v0, double c_sigma, double chi, double gamma) {
  const CriteriaReport r = evaluate_criteria(chi, gamma, v0, c_sigma);
  if (!r.t1 || !r.t2) return TimeOrdering::undefined;
  const double t1 = *r.t1, t2 = *r.t2;
  const double tol = 1e-12 * std::fmax(t1, t2);
  if (std::fabs(t1 - t2) <= tol) return TimeOrdering::tie;
  return t1 < t2 ? TimeOrdering::t1_smaller : TimeOrdering::t2_smaller;
}

}  // namespace sks
