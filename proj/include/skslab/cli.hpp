#pragma once

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "skslab/config.hpp"
#include "skslab/covariance.hpp"
#include "skslab/criteria.hpp"
#include "skslab/dynamics.hpp"
#include "skslab/ensemble.hpp"
#include "skslab/io.hpp"
#include "skslab/moments.hpp"
#include "skslab/oracle.hpp"

namespace sks::cli {

namespace fs = std::filesystem;

inline json criteria_to_json(const CriteriaReport& r) {
  json j;
  j["chi"] = r.chi;
  j["gamma"] = r.gamma;
  j["v0"] = r.v0;
  j["c_sigma"] = r.c_sigma;
  j["chi_as"] = r.chi_as;
  j["chi_pp"] = r.chi_pp;
  j["T1"] = r.t1 ? json(*r.t1) : json(nullptr);
  j["T2"] = r.t2 ? json(*r.t2) : json(nullptr);
  j["T_star"] = r.t_star ? json(*r.t_star) : json(nullptr);
  j["regime"] = to_string(r.regime);
  return j;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "skslab-out";
  std::optional<std::uint64_t> seed;
  int workers = 0;
};

inline ExperimentConfig load_experiment(const CommonOpts& opts) {
  KeyValueConfig kv = KeyValueConfig::parse_file(opts.config_path);
  ExperimentConfig ec = ExperimentConfig::from_config(kv);
  kv.require_all_consumed();
  if (opts.seed) ec.master_seed = *opts.seed;
  ec.solver.seed = ec.master_seed;
  ec.validate();
  return ec;
}

inline json detector_to_json(const SolverConfig& s) {
  json j;
  j["linf_factor"] = s.detector.linf_factor;
  j["l2_factor"] = s.detector.l2_factor;
  j["variance_floor_frac"] = s.detector.variance_floor_frac;
  j["boundary_mass_limit"] = s.boundary_mass_limit;
  return j;
}

inline int cmd_simulate(const CommonOpts& opts) {
  ExperimentConfig ec = load_experiment(opts);
  ec.solver = ec.solver.resolved();
  fs::create_directories(opts.out_dir);

  const NoiseModel noise = ec.build_noise();
  const GridField u0 = ec.ic.rasterize(ec.solver.n, ec.solver.box);
  const std::uint64_t seed = path_seed(ec.master_seed, 0);

  SnapshotSink sink;
  if (ec.solver.snapshot_every > 0) {
    sink = [&](const GridField& f, double t, long step) {
      write_grid_dump(opts.out_dir + "/snapshot_" + std::to_string(step), f, t, "u");
    };
  }
  Stepper stepper(ec.solver, noise);
  PathResult pr = run_path_with(stepper, u0, seed, sink);
  write_moments_csv(opts.out_dir + "/moments.csv", pr.series);

  // residual report
  const auto rc = com_identity_residual(pr.series);
  const auto rv = var_identity_residual(pr.series, ec.solver.chi, ec.solver.gamma);
  double max_rc = 0.0, max_rv = 0.0;
  for (const auto& v : rc) max_rc = std::fmax(max_rc, v.norm());
  for (double v : rv) max_rv = std::fmax(max_rv, std::fabs(v));
  // pathwise slope of V + |C|^2/2 (noisy for a single path; the ensemble
  // version is the statistically meaningful one)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& row : pr.series.rows) {
    const double y = row.m.v + 0.5 * row.m.center.norm2();
    sx += row.t;
    sy += y;
    sxx += row.t * row.t;
    sxy += row.t * y;
  }
  const double n = static_cast<double>(pr.series.rows.size());
  const double denom = n * sxx - sx * sx;
  json rep;
  rep["max_abs_RC"] = max_rc;
  rep["max_abs_RV"] = max_rv;
  rep["slope_fit"] = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  rep["slope_expected"] = 2.0 * (1.0 + ec.solver.gamma) - ec.solver.chi / (4.0 * M_PI);
  rep["status"] = to_string(pr.status);
  if (std::isfinite(pr.t_blow)) rep["t_blow"] = pr.t_blow;
  rep["seed"] = seed;
  rep["neg_warning"] = pr.neg_warning;
  write_json_file(opts.out_dir + "/residuals.json", rep);
  std::cout << rep.dump(2) << std::endl;
  return 0;
}

inline int cmd_ensemble(const CommonOpts& opts) {
  ExperimentConfig ec = load_experiment(opts);
  fs::create_directories(opts.out_dir);
  EnsembleResult res = run_ensemble(ec, opts.workers);

  std::ofstream paths_csv(opts.out_dir + "/paths.csv", std::ios::binary);
  paths_csv << "index,seed,status,t_blow\n";
  for (size_t i = 0; i < res.paths.size(); ++i) {
    const auto& p = res.paths[i];
    paths_csv << i << ',' << p.seed << ',' << to_string(p.status) << ','
              << (std::isfinite(p.t_blow) ? fmt_double(p.t_blow) : "") << '\n';
  }

  json j;
  j["criteria"] = criteria_to_json(res.criteria);
  j["detector"] = detector_to_json(ec.solver.resolved());
  j["time_tolerance"] = kTimeTolerance;
  j["paths"] = res.paths.size();
  j["blown_up"] = res.blown_up;
  j["completed"] = res.completed;
  j["boundary_breach"] = res.boundary_breach;
  j["fraction_blown"] = res.fraction_blown();
  j["before_T1"] = res.before_t1;
  j["before_T2"] = res.before_t2;
  j["wilson_T1"] = {res.wilson_t1.lo, res.wilson_t1.hi};
  j["wilson_T2"] = {res.wilson_t2.lo, res.wilson_t2.hi};
  j["wilson_any"] = {res.wilson_any.lo, res.wilson_any.hi};
  j["slope_fit"] = res.slope.slope;
  j["slope_expected"] = res.slope.expected;
  j["slope_window_end"] = res.slope.window_end;
  j["c_sigma_estimate"] = res.c_sigma_estimate;
  write_json_file(opts.out_dir + "/report.json", j);
  std::cout << j.dump(2) << std::endl;
  return 0;
}

inline int cmd_sweep(const CommonOpts& opts) {
  ExperimentConfig ec = load_experiment(opts);
  fs::create_directories(opts.out_dir);
  const std::vector<SweepRow> table = sweep(ec, opts.workers);

  std::ofstream csv(opts.out_dir + "/sweep.csv", std::ios::binary);
  csv << "chi,gamma,fraction_blown,wilson_lo,wilson_hi,frac_tol_10,frac_tol_15,frac_tol_20,"
         "t_star,slope,slope_expected\n";
  json rows = json::array();
  for (const auto& r : table) {
    csv << fmt_double(r.chi) << ',' << fmt_double(r.gamma) << ',' << fmt_double(r.fraction_blown)
        << ',' << fmt_double(r.wilson.lo) << ',' << fmt_double(r.wilson.hi) << ','
        << fmt_double(r.frac_tol_10) << ',' << fmt_double(r.frac_tol_15) << ','
        << fmt_double(r.frac_tol_20) << ',' << (r.t_star ? fmt_double(*r.t_star) : "") << ','
        << fmt_double(r.slope) << ',' << fmt_double(r.slope_expected) << '\n';
    json row;
    row["chi"] = r.chi;
    row["gamma"] = r.gamma;
    row["fraction_blown"] = r.fraction_blown;
    row["wilson"] = {r.wilson.lo, r.wilson.hi};
    row["frac_tol"] = {{"10", r.frac_tol_10}, {"15", r.frac_tol_15}, {"20", r.frac_tol_20}};
    row["t_star"] = r.t_star ? json(*r.t_star) : json(nullptr);
    row["slope"] = r.slope;
    row["slope_expected"] = r.slope_expected;
    rows.push_back(row);
  }
  write_json_file(opts.out_dir + "/sweep.json", rows);
  std::cout << rows.dump(2) << std::endl;
  return 0;
}

inline int cmd_noise_check(const CommonOpts& opts) {
  ExperimentConfig ec = load_experiment(opts);
  const NoiseModel model = ec.build_noise();
  const double span = model.box() > 0.0 ? model.box() : 2.0 * M_PI;

  // Q(0) = Id at every probe point
  double q0_err = 0.0;
  const int probe = 16;
  for (int i = 0; i < probe; ++i)
    for (int j = 0; j < probe; ++j) {
      const Vec2 x{span * (i + 0.5) / probe - 0.5 * span, span * (j + 0.5) / probe - 0.5 * span};
      q0_err = std::fmax(q0_err, (model.empirical_q(x, x) - Mat2::identity()).max_abs());
    }

  // q(x, x+z) must not depend on x
  Rng rng(derive_stream(ec.master_seed, stream::sampling));
  double stat_err = 0.0;
  for (int s = 0; s < 64; ++s) {
    const Vec2 x{rng.uniform(-span / 2, span / 2), rng.uniform(-span / 2, span / 2)};
    const Vec2 xp{rng.uniform(-span / 2, span / 2), rng.uniform(-span / 2, span / 2)};
    const Vec2 z{rng.uniform(-span / 2, span / 2), rng.uniform(-span / 2, span / 2)};
    stat_err = std::fmax(stat_err, (model.empirical_q(x, x + z) - model.empirical_q(xp, xp + z)).max_abs());
  }

  const CSigmaEstimate cs = estimate_c_sigma(model, 128);
  const LowerBoundCheck lb = check_lower_bound(model, cs.value, 10000, ec.master_seed);

  json j;
  j["q0_error"] = q0_err;
  j["stationarity_error"] = stat_err;
  j["c_sigma"] = cs.value;
  j["lower_bound_ok"] = lb.ok;
  j["c_sigma_converged"] = cs.converged;
  j["mode_count"] = model.mode_count();
  std::cout << j.dump(2) << std::endl;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    write_json_file(opts.out_dir + "/noise_check.json", j);
  }
  return 0;
}

inline int cmd_oracle(const CommonOpts& opts, int particles, int substeps) {
  ExperimentConfig ec = load_experiment(opts);
  fs::create_directories(opts.out_dir);
  OracleResult res = run_oracle(ec, particles, substeps, opts.workers);
  write_moments_csv(opts.out_dir + "/pde_moments.csv", res.pde_series);
  write_moments_csv(opts.out_dir + "/particle_moments.csv", res.particle_series);

  double max_dev = 0.0, max_band = 0.0;
  bool within = true;
  for (size_t k = 0; k < res.times.size() && k < res.c_pde.size(); ++k) {
    const Vec2 d = res.c_particles[k] - res.c_pde[k];
    const double band = res.band(res.times[k]) + 1e-12;
    max_dev = std::fmax(max_dev, std::fmax(std::fabs(d.x), std::fabs(d.y)));
    max_band = std::fmax(max_band, band);
    if (std::fabs(d.x) > band || std::fabs(d.y) > band) within = false;
  }
  json j;
  j["particles"] = particles;
  j["substeps"] = substeps;
  j["points"] = res.times.size();
  j["pde_status"] = to_string(res.pde_status);
  j["max_center_deviation"] = max_dev;
  j["band_at_end"] = res.times.empty() ? 0.0 : res.band(res.times.back());
  j["within_band"] = within;
  j["regularization_events"] = res.regularization_events;
  write_json_file(opts.out_dir + "/oracle.json", j);
  std::cout << j.dump(2) << std::endl;
  return 0;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"stochastic Keller-Segel laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  double chi = 0.0, gamma = 0.0, v0 = 1.0, c_sigma = 0.0;
  int particles = 10000, substeps = 1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opts.config_path, "experiment config file");
    if (needs_config) c->required();
    sub->add_option("--seed", [&opts](const CLI::results_t& r) {
      opts.seed = std::stoull(r[0]);
      return true;
    }, "override ensemble.master_seed");
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--workers", opts.workers, "worker threads (0 = hardware)");
  };

  auto* sim = app.add_subcommand("simulate", "integrate a single path");
  add_common(sim, true);
  auto* ens = app.add_subcommand("ensemble", "run a Monte Carlo ensemble");
  add_common(ens, true);
  auto* swp = app.add_subcommand("sweep", "parameter sweep of ensembles");
  add_common(swp, true);
  auto* noi = app.add_subcommand("noise-check", "validate the noise model");
  add_common(noi, true);
  auto* orc = app.add_subcommand("oracle", "seed-matched particle comparison");
  add_common(orc, true);
  orc->add_option("--particles", particles, "particle count");
  orc->add_option("--substeps", substeps, "grid steps per particle step");

  auto* cri = app.add_subcommand("criteria", "evaluate blow-up criteria");
  cri->add_option("--chi", chi, "chemotactic sensitivity")->required();
  cri->add_option("--gamma", gamma, "noise intensity")->required();
  cri->add_option("--v0", v0, "initial half-variance V[u0]")->required();
  cri->add_option("--c-sigma", c_sigma, "noise Lipschitz constant C_sigma")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(opts);
    if (ens->parsed()) return cmd_ensemble(opts);
    if (swp->parsed()) return cmd_sweep(opts);
    if (noi->parsed()) return cmd_noise_check(opts);
    if (orc->parsed()) return cmd_oracle(opts, particles, substeps);
    if (cri->parsed()) {
      const CriteriaReport r = evaluate_criteria(chi, gamma, v0, c_sigma);
      std::cout << criteria_to_json(r).dump(2) << std::endl;
      return 0;
    }
  } catch (const DomainSizeError& e) {
    std::cerr << "domain-size abort: " << e.what() << std::endl;
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace sks::cli
