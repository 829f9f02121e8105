#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "skslab/config.hpp"
#include "skslab/covariance.hpp"
#include "skslab/criteria.hpp"
#include "skslab/dynamics.hpp"
#include "skslab/ic.hpp"
#include "skslab/rng.hpp"

namespace sks {

// Fixed acceptance constant: blow-up times are compared against T* (1 + tol).
// This is a documented discretisation allowance, separate from the physics;
// sweep outputs also report fractions at 0.10 and 0.20 for sensitivity.
inline constexpr double kTimeTolerance = 0.15;

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

inline WilsonInterval wilson_interval(long k, long n, double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double phat = static_cast<double>(k) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (phat + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::fmax(0.0, center - half), std::fmin(1.0, center + half)};
}

struct ExperimentConfig {
  SolverConfig solver;
  CovarianceSpec noise_spec;
  int mode_count = 32;
  InitialCondition ic;
  int paths = 1;
  std::uint64_t master_seed = 0;
  std::vector<double> chi_sweep;    // empty: use solver.chi
  std::vector<double> gamma_sweep;  // empty: use solver.gamma
  std::string out_dir;

  void validate() const {
    solver.validate();
    noise_spec.validate();
    ic.validate();
    if (paths < 1) throw ConfigError("ensemble.paths must be >= 1");
    if (mode_count < 1) throw ConfigError("noise.mode_count must be >= 1");
  }

  // Documented flat key-value schema; unknown keys are rejected by the caller
  // via cfg.require_all_consumed().
  static ExperimentConfig from_config(KeyValueConfig& cfg) {
    ExperimentConfig ec;
    ec.solver.n = static_cast<int>(cfg.get_int_or("solver.n", 128));
    ec.solver.box = cfg.get_double_or("solver.box", 16.0);
    ec.solver.chi = cfg.get_double_or("solver.chi", 0.0);
    ec.solver.gamma = cfg.get_double_or("solver.gamma", 0.0);
    const std::string dt = cfg.get_string_or("solver.dt", "auto");
    ec.solver.dt = (dt == "auto") ? 0.0 : std::stod(dt);
    ec.solver.t_end = cfg.get_double_or("solver.t_end", 0.1);
    const std::string integ = cfg.get_string_or("solver.integrator", "ito_euler");
    if (integ == "ito_euler")
      ec.solver.integrator = Integrator::ito_euler;
    else if (integ == "strat_heun")
      ec.solver.integrator = Integrator::strat_heun;
    else
      throw ConfigError("solver.integrator: unknown integrator " + integ);
    const std::string rule = cfg.get_string_or("solver.dealias", "two_thirds");
    if (rule == "two_thirds")
      ec.solver.dealias = DealiasRule::two_thirds;
    else if (rule == "none")
      ec.solver.dealias = DealiasRule::none;
    else
      throw ConfigError("solver.dealias: unknown rule " + rule);
    const std::string chem = cfg.get_string_or("solver.chemical", "free_space");
    if (chem == "free_space")
      ec.solver.chemical = ChemicalMethod::free_space_padded;
    else if (chem == "periodic")
      ec.solver.chemical = ChemicalMethod::periodic_spectral;
    else
      throw ConfigError("solver.chemical: unknown method " + chem);
    ec.solver.record_every = static_cast<int>(cfg.get_int_or("solver.record_every", 10));
    ec.solver.snapshot_every = static_cast<int>(cfg.get_int_or("solver.snapshot_every", 0));
    ec.solver.boundary_mass_limit = cfg.get_double_or("solver.boundary_mass_limit", 1e-6);
    ec.solver.detector.linf_factor = cfg.get_double_or("solver.linf_factor", 1e3);
    ec.solver.detector.l2_factor = cfg.get_double_or("solver.l2_factor", 1e2);
    ec.solver.detector.variance_floor_frac = cfg.get_double_or("solver.variance_floor", 1e-3);

    const std::string fkind = cfg.get_string_or("noise.f.kind", "single_radius");
    const double fparam = cfg.get_double_or("noise.f.params", 1.0);
    const double p = cfg.get_double_or("noise.p", 0.0);
    ec.noise_spec = CovarianceSpec::make(CovarianceSpec::kind_from_string(fkind), fparam, p);
    ec.mode_count = static_cast<int>(cfg.get_int_or("noise.mode_count", 32));

    ec.ic.kind = InitialCondition::kind_from_string(cfg.get_string_or("ic.kind", "gaussian"));
    ec.ic.scale = cfg.get_double_or("ic.scale", 1.0);
    ec.ic.separation = cfg.get_double_or("ic.separation", 0.0);

    ec.paths = static_cast<int>(cfg.get_int_or("ensemble.paths", 1));
    ec.master_seed = cfg.get_u64_or("ensemble.master_seed", 0);
    if (cfg.has("ensemble.chi_sweep")) ec.chi_sweep = cfg.get_double_list("ensemble.chi_sweep");
    if (cfg.has("ensemble.gamma_sweep"))
      ec.gamma_sweep = cfg.get_double_list("ensemble.gamma_sweep");
    return ec;
  }

  NoiseModel build_noise() const {
    return NoiseModel::build(noise_spec, mode_count, solver.box, solver.gamma);
  }
};

struct PathRecord {
  std::uint64_t seed = 0;
  PathStatus status = PathStatus::running;
  double t_blow = std::numeric_limits<double>::quiet_NaN();
  bool neg_warning = false;
};

// Aligned per-path series on the shared record grid (t = k record_every dt),
// truncated at the path's terminal row.
struct AlignedSeries {
  std::vector<double> v;         // V[u_t]
  std::vector<double> v_plus_c;  // V[u_t] + |C[u_t]|^2 / 2
};

struct SlopeFit {
  double slope = 0.0;
  double expected = 0.0;
  double window_end = 0.0;
  int points = 0;
};

struct EnsembleResult {
  std::vector<PathRecord> paths;
  std::vector<AlignedSeries> series;  // indexed by path
  std::vector<double> times;          // shared record grid
  CriteriaReport criteria;
  double c_sigma_estimate = 0.0;
  long blown_up = 0;
  long completed = 0;
  long boundary_breach = 0;
  long before_t1 = 0;  // blow-ups with t_blow <= T1 (1 + tol)
  long before_t2 = 0;
  WilsonInterval wilson_t1;
  WilsonInterval wilson_t2;
  WilsonInterval wilson_any;
  SlopeFit slope;

  double fraction_blown() const {
    return paths.empty() ? 0.0 : static_cast<double>(blown_up) / paths.size();
  }
};

struct DomainSizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// least squares slope of the ensemble mean of y over the all-alive window
inline SlopeFit fit_mean_slope(const std::vector<double>& times,
                               const std::vector<AlignedSeries>& series, double expected) {
  SlopeFit fit;
  fit.expected = expected;
  if (series.empty()) return fit;
  size_t alive_len = times.size();
  for (const auto& s : series) alive_len = std::min(alive_len, s.v_plus_c.size());
  if (alive_len < 2) return fit;

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (size_t k = 0; k < alive_len; ++k) {
    double mean = 0.0;
    for (const auto& s : series) mean += s.v_plus_c[k];
    mean /= static_cast<double>(series.size());
    const double t = times[k];
    sx += t;
    sy += mean;
    sxx += t * t;
    sxy += t * mean;
  }
  const double n = static_cast<double>(alive_len);
  const double denom = n * sxx - sx * sx;
  fit.slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  fit.window_end = times[alive_len - 1];
  fit.points = static_cast<int>(alive_len);
  return fit;
}

}  // namespace detail

// Monte Carlo driver. Paths run concurrently; per-path seeds come from the
// counter-based split of master_seed, and results are merged by path index,
// so the aggregate is a pure function of (config, master_seed) no matter how
// many workers ran. More than 20% boundary breaches abort with a domain-size
// diagnostic.
inline EnsembleResult run_ensemble(const ExperimentConfig& cfg_in, int workers = 0) {
  ExperimentConfig cfg = cfg_in;
  cfg.solver = cfg.solver.resolved();
  cfg.validate();
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, cfg.paths));

  const NoiseModel noise = cfg.build_noise();
  const GridField u0 = cfg.ic.rasterize(cfg.solver.n, cfg.solver.box);

  EnsembleResult res;
  res.paths.resize(static_cast<size_t>(cfg.paths));
  res.series.resize(static_cast<size_t>(cfg.paths));

  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

  auto worker_fn = [&](int w) {
    try {
      Stepper stepper(cfg.solver, noise);
      for (;;) {
        const int idx = next.fetch_add(1);
        if (idx >= cfg.paths) break;
        const std::uint64_t seed = path_seed(cfg.master_seed, static_cast<std::uint64_t>(idx));
        PathResult pr = run_path_with(stepper, u0, seed);
        PathRecord rec;
        rec.seed = seed;
        rec.status = pr.status;
        rec.t_blow = pr.t_blow;
        rec.neg_warning = pr.neg_warning;
        res.paths[static_cast<size_t>(idx)] = rec;
        AlignedSeries al;
        for (const auto& row : pr.series.rows) {
          const long step = std::lround(row.t / cfg.solver.dt);
          if (step % cfg.solver.record_every != 0) continue;  // off-grid terminal row
          al.v.push_back(row.m.v);
          al.v_plus_c.push_back(row.m.v + 0.5 * row.m.center.norm2());
        }
        res.series[static_cast<size_t>(idx)] = std::move(al);
      }
    } catch (...) {
      errors[static_cast<size_t>(w)] = std::current_exception();
    }
  };

  if (workers == 1) {
    worker_fn(0);
  } else {
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // shared record grid
  size_t max_len = 0;
  for (const auto& s : res.series) max_len = std::max(max_len, s.v.size());
  res.times.resize(max_len);
  for (size_t k = 0; k < max_len; ++k)
    res.times[k] = static_cast<double>(k) * cfg.solver.record_every * cfg.solver.dt;

  // criteria with the estimated C_sigma and the analytic V0
  res.c_sigma_estimate = estimate_c_sigma(noise, 64).value;
  res.criteria = evaluate_criteria(cfg.solver.chi, cfg.solver.gamma, cfg.ic.v0(),
                                   res.c_sigma_estimate);

  for (const auto& rec : res.paths) {
    switch (rec.status) {
      case PathStatus::blown_up: res.blown_up += 1; break;
      case PathStatus::completed: res.completed += 1; break;
      case PathStatus::boundary_breach: res.boundary_breach += 1; break;
      case PathStatus::running: break;
    }
    if (rec.status == PathStatus::blown_up) {
      if (res.criteria.t1 && rec.t_blow <= *res.criteria.t1 * (1.0 + kTimeTolerance))
        res.before_t1 += 1;
      if (res.criteria.t2 && rec.t_blow <= *res.criteria.t2 * (1.0 + kTimeTolerance))
        res.before_t2 += 1;
    }
  }
  res.wilson_t1 = wilson_interval(res.before_t1, cfg.paths);
  res.wilson_t2 = wilson_interval(res.before_t2, cfg.paths);
  res.wilson_any = wilson_interval(res.blown_up, cfg.paths);
  res.slope = detail::fit_mean_slope(res.times, res.series,
                                     2.0 * (1.0 + cfg.solver.gamma) - cfg.solver.chi / (4.0 * M_PI));

  if (res.boundary_breach * 5 > cfg.paths) {
    throw DomainSizeError(
        "more than 20% of paths breached the boundary-mass guard (" +
        std::to_string(res.boundary_breach) + "/" + std::to_string(cfg.paths) +
        "); the box is too small for this parameter set, increase solver.box");
  }
  return res;
}

struct SweepRow {
  double chi = 0.0;
  double gamma = 0.0;
  double fraction_blown = 0.0;
  WilsonInterval wilson;
  double frac_tol_10 = 0.0;  // blow-up fraction before T* at 10/15/20% allowance
  double frac_tol_15 = 0.0;
  double frac_tol_20 = 0.0;
  std::optional<double> t_star;
  double slope = 0.0;
  double slope_expected = 0.0;
};

// Cross product of the chi and gamma sweep lists (falling back to the scalar
// config values). Each sweep point gets its own derived master seed; the
// whole table is reproducible from (config, master_seed).
inline std::vector<SweepRow> sweep(const ExperimentConfig& cfg_in, int workers = 0) {
  std::vector<double> chis = cfg_in.chi_sweep.empty()
                                 ? std::vector<double>{cfg_in.solver.chi}
                                 : cfg_in.chi_sweep;
  std::vector<double> gammas = cfg_in.gamma_sweep.empty()
                                   ? std::vector<double>{cfg_in.solver.gamma}
                                   : cfg_in.gamma_sweep;
  std::vector<SweepRow> table;
  int point = 0;
  for (double g : gammas) {
    for (double chi : chis) {
      ExperimentConfig cfg = cfg_in;
      cfg.solver.chi = chi;
      cfg.solver.gamma = g;
      cfg.solver.dt = cfg_in.solver.dt;  // re-resolved per point (depends on gamma)
      cfg.master_seed = derive_stream(cfg_in.master_seed, 0x53EE9000ULL + point);
      EnsembleResult r = run_ensemble(cfg, workers);

      SweepRow row;
      row.chi = chi;
      row.gamma = g;
      row.fraction_blown = r.fraction_blown();
      row.wilson = r.wilson_any;
      row.t_star = r.criteria.t_star;
      if (r.criteria.t_star) {
        long c10 = 0, c15 = 0, c20 = 0;
        for (const auto& rec : r.paths) {
          if (rec.status != PathStatus::blown_up) continue;
          if (rec.t_blow <= *r.criteria.t_star * 1.10) ++c10;
          if (rec.t_blow <= *r.criteria.t_star * 1.15) ++c15;
          if (rec.t_blow <= *r.criteria.t_star * 1.20) ++c20;
        }
        const double n = static_cast<double>(r.paths.size());
        row.frac_tol_10 = c10 / n;
        row.frac_tol_15 = c15 / n;
        row.frac_tol_20 = c20 / n;
      }
      row.slope = r.slope.slope;
      row.slope_expected = r.slope.expected;
      table.push_back(row);
      ++point;
    }
  }
  return table;
}

}  // namespace sks
