#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "skslab/dynamics.hpp"
#include "skslab/ensemble.hpp"
#include "skslab/ic.hpp"
#include "skslab/particles.hpp"

namespace sks {

// Seed-matched comparison of the grid path and the interacting-particle
// oracle under the same common-noise realisation.
//
// The particle stepper may take substeps > 1 grid steps at a time; it then
// consumes the summed Brownian increments of the substeps, which is the same
// Brownian path at coarser resolution.
//
// Finite-size band for the center of mass: per component,
//   Var[C_N(t) - C(t)] ~ (V0 + 2 t + 2 gamma t) / N
// (V0/N from the initial i.i.d. sample, 2t/N from the independent particle
// diffusions, and at most 2 gamma t / N from replacing <sigma_k, u> by the
// empirical particle average, whose per-mode variance is bounded by the
// diagonal Q(0) = Id). The acceptance band is 3 of these standard deviations.
struct OracleResult {
  std::vector<double> times;
  std::vector<Vec2> c_pde;
  std::vector<double> v_pde;
  std::vector<Vec2> c_particles;
  std::vector<double> v_particles;
  MomentSeries pde_series;
  MomentSeries particle_series;  // same CSV schema as the PDE series
  double v0 = 0.0;
  double gamma = 0.0;
  int particle_count = 0;
  long long regularization_events = 0;
  PathStatus pde_status = PathStatus::completed;

  double band(double t) const {
    return 3.0 * std::sqrt((v0 + 2.0 * t + 2.0 * gamma * t) / particle_count);
  }
};

inline OracleResult run_oracle(const ExperimentConfig& cfg_in, int particle_count,
                               int substeps = 1, int threads = 0) {
  if (particle_count < 2) throw std::invalid_argument("run_oracle: particle_count >= 2");
  if (substeps < 1) throw std::invalid_argument("run_oracle: substeps >= 1");
  ExperimentConfig cfg = cfg_in;
  cfg.solver = cfg.solver.resolved();
  if (cfg.solver.record_every % substeps != 0)
    throw std::invalid_argument("run_oracle: substeps must divide record_every");
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());

  const NoiseModel noise = cfg.build_noise();
  const std::uint64_t seed = path_seed(cfg.master_seed, 0);

  // grid side
  const GridField u0 = cfg.ic.rasterize(cfg.solver.n, cfg.solver.box);
  Stepper stepper(cfg.solver, noise);
  PathResult pde = run_path_with(stepper, u0, seed);

  OracleResult out;
  out.v0 = cfg.ic.v0();
  out.gamma = cfg.solver.gamma;
  out.particle_count = particle_count;
  out.pde_series = pde.series;
  out.pde_status = pde.status;

  // particle side: identical W stream, coarsened by summing substeps blocks
  ParticleSystem sys;
  sys.chi = cfg.solver.chi;
  sys.gamma = cfg.solver.gamma;
  sys.eps_core = 0.5 * cfg.solver.spacing();  // tied to the grid resolution
  {
    Rng ic_rng(derive_stream(seed, stream::initial_condition));
    sys.pos = cfg.ic.sample(ic_rng, particle_count);
  }
  Rng wstream(derive_stream(seed, stream::common_noise));
  Rng bstream(derive_stream(seed, stream::particle_brownian));

  const int modes = noise.mode_count();
  const double dt_fine = cfg.solver.dt;
  const double dt_part = substeps * dt_fine;
  const double sqrt_dt = std::sqrt(dt_fine);

  // stop where the PDE path stopped: the oracle is only valid pre blow-up
  long pde_steps = std::lround(pde.series.rows.back().t / dt_fine);
  const long coarse_steps = pde_steps / substeps;
  const int rec_coarse = cfg.solver.record_every / substeps;

  auto record = [&](double t) {
    const ParticleMoments pm = particle_moments(sys);
    out.times.push_back(t);
    out.c_particles.push_back(pm.center);
    out.v_particles.push_back(pm.v);
    MomentSample row;
    row.t = t;
    row.m.mass = 1.0;
    row.m.center = pm.center;
    row.m.v = pm.v;
    row.status = PathStatus::running;
    out.particle_series.rows.push_back(row);
  };

  record(0.0);
  std::vector<double> dw(static_cast<size_t>(modes));
  for (long step = 0; step < coarse_steps; ++step) {
    std::fill(dw.begin(), dw.end(), 0.0);
    for (int s = 0; s < substeps; ++s)
      for (int k = 0; k < modes; ++k) dw[static_cast<size_t>(k)] += sqrt_dt * wstream.normal();
    step_particles(sys, dt_part, noise, dw, bstream, threads);
    if ((step + 1) % rec_coarse == 0) record((step + 1) * dt_part);
  }
  if (!out.particle_series.rows.empty())
    out.particle_series.rows.back().status = PathStatus::completed;
  out.regularization_events = sys.regularization_events;

  // align the PDE series on the same record grid
  for (const auto& row : pde.series.rows) {
    const long step = std::lround(row.t / dt_fine);
    if (step % cfg.solver.record_every != 0) continue;
    if (step / cfg.solver.record_every >= static_cast<long>(out.times.size())) break;
    out.c_pde.push_back(row.m.center);
    out.v_pde.push_back(row.m.v);
  }
  return out;
}

// Ensemble slope of E[V_N + |Xbar|^2/2] for the particle system. Ito calculus
// on the finite system gives the exact drift
//   d/dt E[V_N + |Xbar|^2/2] = 2 (1 + gamma) - (chi/4pi) (1 - 1/N):
// the diffusion and common-noise quadratic variations contribute 2(1+gamma)
// (using Tr Q(0) = 2), and the pairwise attraction contributes
// -(chi/4pi)(1-1/N) because (1/N^2) sum_{i != j} 1 = 1 - 1/N. This is the
// N-particle analogue of the grid moment-slope law.
struct ParticleSlopeResult {
  SlopeFit fit;
  int paths = 0;
};

inline ParticleSlopeResult particle_slope_ensemble(const ExperimentConfig& cfg_in,
                                                   int particle_count, int paths, double dt,
                                                   double t_end, int record_every,
                                                   int workers = 0) {
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, paths));
  ExperimentConfig cfg = cfg_in;
  cfg.solver = cfg.solver.resolved();
  const NoiseModel noise = cfg.build_noise();

  const long steps = std::lround(t_end / dt);
  const size_t nrec = static_cast<size_t>(steps / record_every) + 1;
  std::vector<AlignedSeries> all(static_cast<size_t>(paths));
  std::vector<double> times(nrec);
  for (size_t k = 0; k < nrec; ++k) times[k] = static_cast<double>(k) * record_every * dt;

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  auto worker_fn = [&](int w) {
    try {
      for (;;) {
        const int idx = next.fetch_add(1);
        if (idx >= paths) break;
        const std::uint64_t seed = path_seed(cfg.master_seed, static_cast<std::uint64_t>(idx));
        ParticleSystem sys;
        sys.chi = cfg.solver.chi;
        sys.gamma = cfg.solver.gamma;
        sys.eps_core = 0.5 * cfg.solver.spacing();
        Rng ic_rng(derive_stream(seed, stream::initial_condition));
        sys.pos = cfg.ic.sample(ic_rng, particle_count);
        Rng wstream(derive_stream(seed, stream::common_noise));
        Rng bstream(derive_stream(seed, stream::particle_brownian));
        std::vector<double> dw(static_cast<size_t>(noise.mode_count()));
        AlignedSeries al;
        auto push = [&] {
          const ParticleMoments pm = particle_moments(sys);
          al.v.push_back(pm.v);
          al.v_plus_c.push_back(pm.v + 0.5 * pm.center.norm2());
        };
        push();
        const double sdt = std::sqrt(dt);
        for (long s = 0; s < steps; ++s) {
          for (auto& x : dw) x = sdt * wstream.normal();
          step_particles(sys, dt, noise, dw, bstream, 1);
          if ((s + 1) % record_every == 0) push();
        }
        all[static_cast<size_t>(idx)] = std::move(al);
      }
    } catch (...) {
      errors[static_cast<size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    worker_fn(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double expected = 2.0 * (1.0 + cfg.solver.gamma) -
                          (cfg.solver.chi / (4.0 * M_PI)) *
                              (1.0 - 1.0 / static_cast<double>(particle_count));
  ParticleSlopeResult out;
  out.fit = detail::fit_mean_slope(times, all, expected);
  out.paths = paths;
  return out;
}

}  // namespace sks
