#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "skslab/covariance.hpp"
#include "skslab/grid.hpp"
#include "skslab/moments.hpp"
#include "skslab/rng.hpp"
#include "skslab/spectral.hpp"

namespace sks {

enum class Integrator { ito_euler, strat_heun };

inline const char* to_string(Integrator i) {
  return i == Integrator::ito_euler ? "ito_euler" : "strat_heun";
}

struct BlowUpThresholds {
  double linf_factor = 1e3;        // multiple of ||u_0||_inf
  double l2_factor = 1e2;          // multiple of ||u_0||_{L^2}
  double variance_floor_frac = 1e-3;  // V[u_t] < frac * V[u_0]
};

struct SolverConfig {
  double chi = 0.0;
  double gamma = 0.0;
  int n = 128;
  double box = 16.0;
  double dt = 0.0;  // 0 selects the default 0.25 h^2 / (4 (1+gamma))
  double t_end = 0.1;
  Integrator integrator = Integrator::ito_euler;
  DealiasRule dealias = DealiasRule::two_thirds;
  ChemicalMethod chemical = ChemicalMethod::free_space_padded;
  BlowUpThresholds detector;
  double boundary_mass_limit = 1e-6;
  int record_every = 1;
  int snapshot_every = 0;
  std::uint64_t seed = 0;
  double neg_warning_frac = 1e-6;  // S[u_t] warning level, fraction of ||u_0||_{L2}^2
  bool disable_diffusion = false;  // test hook: transport-only dynamics

  double spacing() const { return box / n; }

  double stability_bound() const {
    const double h = spacing();
    return h * h / (4.0 * (1.0 + gamma));
  }

  static double default_dt(int n, double box, double gamma) {
    const double h = box / n;
    return 0.25 * h * h / (4.0 * (1.0 + gamma));
  }

  SolverConfig resolved() const {
    SolverConfig c = *this;
    if (c.dt == 0.0) c.dt = default_dt(n, box, gamma);
    c.validate();
    return c;
  }

  void validate() const {
    if (!(chi >= 0.0)) throw std::invalid_argument("SolverConfig: chi must be >= 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("SolverConfig: gamma must be >= 0");
    if (n < 32 || (n & (n - 1)) != 0)
      throw std::invalid_argument("SolverConfig: N must be a power of two >= 32");
    if (!(box > 0.0)) throw std::invalid_argument("SolverConfig: box must be > 0");
    if (!(dt > 0.0)) throw std::invalid_argument("SolverConfig: dt must be > 0");
    if (dt > stability_bound() * (1.0 + 1e-12))
      throw std::invalid_argument("SolverConfig: dt exceeds the diffusion stability bound h^2/(4(1+gamma))");
    if (!(t_end > 0.0)) throw std::invalid_argument("SolverConfig: t_end must be > 0");
    if (record_every < 1) throw std::invalid_argument("SolverConfig: record_every must be >= 1");
  }
};

struct SimState {
  GridField u;
  double t = 0.0;
  long step = 0;
  PathStatus status = PathStatus::running;
  double t_blow = std::numeric_limits<double>::quiet_NaN();
  Vec2 acc_a;      // A_t accumulator
  double acc_b = 0.0;  // B_t accumulator
  bool neg_warning = false;

  // frozen at start for detector thresholds
  double u0_linf = 0.0;
  double u0_l2 = 0.0;
  double v0 = 0.0;

  explicit SimState(GridField u0) : u(std::move(u0)) {}
};

// One integration engine per worker: owns the spectral workspace, the mode
// value tables of the noise family on the grid, and scratch fields. Reusable
// across paths with the same (config grid, noise model).
class Stepper {
 public:
  Stepper(const SolverConfig& cfg, const NoiseModel& noise)
      : cfg_(cfg.resolved()),
        noise_(noise),
        ws_(cfg_.n, cfg_.box),
        flux_(cfg_.n, cfg_.box),
        vx_(cfg_.n, cfg_.box),
        vy_(cfg_.n, cfg_.box) {
    build_mode_tables();
  }

  const SolverConfig& config() const { return cfg_; }
  SpectralWorkspace& workspace() { return ws_; }
  const NoiseModel& noise() const { return noise_; }

  // Initialise path state from initial data: normalise mass to one exactly,
  // freeze detector references.
  SimState make_state(const GridField& u0) const {
    if (!u0.finite()) throw std::invalid_argument("run_path: non-finite initial data");
    if (u0.min_value() < -1e-12 * std::fmax(u0.linf(), 1.0))
      throw std::invalid_argument("run_path: initial data must be nonnegative");
    GridField u = u0;
    const double m = u.mass();
    if (!(m > 0.0)) throw std::invalid_argument("run_path: initial data must have positive mass");
    for (size_t k = 0; k < u.size(); ++k) u.data()[k] /= m;
    SimState st(std::move(u));
    const Moments mom = compute_moments(st.u);
    st.u0_linf = mom.linf;
    st.u0_l2 = mom.l2;
    st.v0 = mom.v;
    return st;
  }

  // Draw the per-step Brownian increments dW^k ~ N(0, dt), one per mode, in
  // mode order, from the path's common-noise stream.
  void draw_increments(Rng& rng, std::vector<double>& dw) const {
    dw.resize(noise_.mode_count());
    const double s = std::sqrt(cfg_.dt);
    for (auto& w : dw) w = s * rng.normal();
  }

  // One step of the configured integrator. Returns the post-step moments.
  Moments advance(SimState& state, std::span<const double> dw) {
    if (state.status != PathStatus::running)
      throw std::logic_error("advance: path is not running");
    if (static_cast<int>(dw.size()) != noise_.mode_count())
      throw std::invalid_argument("advance: increment count does not match mode count");

    if (cfg_.integrator == Integrator::ito_euler)
      step_ito(state, dw);
    else
      step_strat_heun(state, dw);

    ws_.dealias_in_place(state.u, cfg_.dealias);
    state.step += 1;
    const double t_prev = state.t;
    state.t = state.step * cfg_.dt;

    const Moments m = compute_moments(state.u);
    apply_detector(state, m, t_prev);
    return m;
  }

 private:
  SolverConfig cfg_;
  NoiseModel noise_;
  SpectralWorkspace ws_;
  VectorField flux_;
  GridField vx_, vy_;
  std::vector<std::vector<double>> mode_tables_;  // cos/sin(u_k . x) per mode
  std::vector<double> coord_;

  void build_mode_tables() {
    const int n = cfg_.n;
    coord_.resize(n);
    for (int i = 0; i < n; ++i) coord_[i] = (i - n / 2) * cfg_.spacing();
    mode_tables_.resize(noise_.mode_count());
    for (int k = 0; k < noise_.mode_count(); ++k) {
      auto& tab = mode_tables_[k];
      tab.resize(static_cast<size_t>(n) * n);
      const NoiseMode& md = noise_.modes()[k];
      for (int i = 0; i < n; ++i) {
        const double px = md.wavevector.x * coord_[i];
        for (int j = 0; j < n; ++j) {
          const double phase = px + md.wavevector.y * coord_[j];
          tab[static_cast<size_t>(i) * n + j] = md.is_sine ? std::sin(phase) : std::cos(phase);
        }
      }
    }
  }

  // v(x) = sum_k sigma_k(x) dW_k accumulated into (vx, vy)
  void build_noise_velocity(std::span<const double> dw) {
    vx_.fill(0.0);
    vy_.fill(0.0);
    const size_t nn = vx_.size();
    for (int k = 0; k < noise_.mode_count(); ++k) {
      const NoiseMode& md = noise_.modes()[k];
      const double cx = md.amplitude * md.polarization.x * dw[k];
      const double cy = md.amplitude * md.polarization.y * dw[k];
      if (cx == 0.0 && cy == 0.0) continue;
      const double* tab = mode_tables_[k].data();
      double* px = vx_.data();
      double* py = vy_.data();
      for (size_t q = 0; q < nn; ++q) {
        px[q] += cx * tab[q];
        py[q] += cy * tab[q];
      }
    }
  }

  // <sigma_k, u> and <x.sigma_k, u> for every mode, fused reductions
  void mode_inner_products(const GridField& u, std::vector<Vec2>& s, std::vector<double>& b) const {
    const int n = cfg_.n;
    const double h2 = u.cell_area();
    s.assign(noise_.mode_count(), Vec2{});
    b.assign(noise_.mode_count(), 0.0);
    for (int k = 0; k < noise_.mode_count(); ++k) {
      const NoiseMode& md = noise_.modes()[k];
      const double* tab = mode_tables_[k].data();
      const double* uu = u.data();
      double s0 = 0.0, sx = 0.0, sy = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = coord_[i];
        double row0 = 0.0, rowy = 0.0;
        const size_t off = static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
          const double w = tab[off + j] * uu[off + j];
          row0 += w;
          rowy += w * coord_[j];
        }
        s0 += row0;
        sx += row0 * x;
        sy += rowy;
      }
      const Vec2 e = md.polarization * md.amplitude;
      s[k] = e * (s0 * h2);
      b[k] = (e.x * sx + e.y * sy) * h2;
    }
  }

  void accumulate(SimState& state, std::span<const double> dw, const std::vector<Vec2>& s,
                  const std::vector<double>& b) const {
    const double c = std::sqrt(2.0 * cfg_.gamma);
    for (int k = 0; k < noise_.mode_count(); ++k) {
      state.acc_a += s[k] * (c * dw[k]);
      state.acc_b += b[k] * (c * dw[k]);
    }
  }

  // drift flux in conservative form: F = u (-chi dt grad c + sqrt(2 gamma) v)
  // so that u <- u + dt (1+gamma) Lap u + Div F in one spectral divergence
  void apply_update(GridField& u, const GridField& lap, const GridField& divflux,
                    double diffusion) {
    const size_t nn = u.size();
    double* pu = u.data();
    const double* pl = lap.data();
    const double* pd = divflux.data();
    for (size_t q = 0; q < nn; ++q) pu[q] += diffusion * pl[q] + pd[q];
  }

  GridField drift_and_noise_divergence(const GridField& u, std::span<const double> dw,
                                       double advection_weight, double noise_weight) {
    const bool advect = advection_weight != 0.0;
    const bool noisy = noise_weight != 0.0;
    if (!advect && !noisy) {
      GridField zero(cfg_.n, cfg_.box);
      return zero;
    }
    std::optional<VectorField> gc;
    if (advect) gc = ws_.solve_chemical(u, cfg_.chemical);
    if (noisy)
      build_noise_velocity(dw);
    else {
      vx_.fill(0.0);
      vy_.fill(0.0);
    }
    const int n = cfg_.n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double w = u(i, j);
        const double ax = advect ? advection_weight * gc->x(i, j) : 0.0;
        const double ay = advect ? advection_weight * gc->y(i, j) : 0.0;
        flux_.x(i, j) = w * (ax + noise_weight * vx_(i, j));
        flux_.y(i, j) = w * (ay + noise_weight * vy_(i, j));
      }
    return ws_.divergence(flux_);
  }

  // Ito Euler-Maruyama with the corrected drift (1+gamma) Lap u:
  //   u <- u + dt [(1+gamma) Lap u - chi Div(u grad c)] + sqrt(2 gamma) Div(u v)
  void step_ito(SimState& state, std::span<const double> dw) {
    const double noise_w = std::sqrt(2.0 * cfg_.gamma);
    if (noise_w > 0.0) {
      std::vector<Vec2> s;
      std::vector<double> b;
      mode_inner_products(state.u, s, b);
      accumulate(state, dw, s, b);
    }
    GridField divflux =
        drift_and_noise_divergence(state.u, dw, -cfg_.chi * cfg_.dt, noise_w);
    const GridField lap = ws_.laplacian(state.u);
    const double diff = cfg_.disable_diffusion ? 0.0 : (1.0 + cfg_.gamma) * cfg_.dt;
    apply_update(state.u, lap, divflux, diff);
  }

  // Heun predictor-corrector; the midpoint treatment of the noise term gives
  // the Stratonovich solution, so the drift is Lap u with no gamma correction.
  void step_strat_heun(SimState& state, std::span<const double> dw) {
    const double noise_w = std::sqrt(2.0 * cfg_.gamma);
    const double diff = cfg_.disable_diffusion ? 0.0 : cfg_.dt;

    std::vector<Vec2> s0, s1;
    std::vector<double> b0, b1;
    mode_inner_products(state.u, s0, b0);

    // predictor
    GridField div0 = drift_and_noise_divergence(state.u, dw, -cfg_.chi * cfg_.dt, noise_w);
    GridField lap0 = ws_.laplacian(state.u);
    GridField pred = state.u;
    apply_update(pred, lap0, div0, diff);
    ws_.dealias_in_place(pred, cfg_.dealias);

    // corrector
    mode_inner_products(pred, s1, b1);
    GridField div1 = drift_and_noise_divergence(pred, dw, -cfg_.chi * cfg_.dt, noise_w);
    GridField lap1 = ws_.laplacian(pred);

    const size_t nn = state.u.size();
    double* pu = state.u.data();
    for (size_t q = 0; q < nn; ++q) {
      pu[q] += 0.5 * (diff * (lap0.data()[q] + lap1.data()[q]) + div0.data()[q] + div1.data()[q]);
    }

    // The identity accumulators are Ito integrals; midpoint quadrature gives
    // the Stratonovich ones. For A the two coincide (grad(sigma_k) sigma_k = 0
    // mode by mode). For B the conversion is
    //   B_ito = B_mid + gamma int <sum_k |sigma_k|^2, u> ds,
    // and sum_k |sigma_k(x)|^2 = Tr Q(0) = 2 exactly by construction.
    for (size_t k = 0; k < s0.size(); ++k) {
      s0[k] = (s0[k] + s1[k]) * 0.5;
      b0[k] = 0.5 * (b0[k] + b1[k]);
    }
    accumulate(state, dw, s0, b0);
    state.acc_b += 2.0 * cfg_.gamma * cfg_.dt * state.u.mass();
  }

  void apply_detector(SimState& state, const Moments& m, double t_prev) {
    const auto& thr = cfg_.detector;
    const bool nan_hit = !std::isfinite(m.mass) || !std::isfinite(m.linf) || !std::isfinite(m.v);
    const bool linf_hit = m.linf > thr.linf_factor * state.u0_linf;
    const bool l2_hit = m.l2 > thr.l2_factor * state.u0_l2;
    const bool var_hit = m.v < thr.variance_floor_frac * state.v0;
    if (nan_hit || linf_hit || l2_hit || var_hit) {
      state.status = PathStatus::blown_up;
      state.t_blow = t_prev + 0.5 * cfg_.dt;  // step midpoint
      return;
    }
    if (m.s_neg > cfg_.neg_warning_frac * state.u0_l2 * state.u0_l2) state.neg_warning = true;
    // The domain-truncation guard is meaningful while the solution is still
    // resolved; once a collapse is underway (order-of-magnitude growth of the
    // peak) the blow-up triggers own the terminal status.
    if (m.linf <= 10.0 * state.u0_linf &&
        state.u.boundary_mass_fraction() > cfg_.boundary_mass_limit) {
      state.status = PathStatus::boundary_breach;
      return;
    }
    if (state.t >= cfg_.t_end - 1e-12 * cfg_.t_end) state.status = PathStatus::completed;
  }
};

struct PathResult {
  MomentSeries series;
  PathStatus status = PathStatus::running;
  double t_blow = std::numeric_limits<double>::quiet_NaN();
  bool neg_warning = false;
  std::uint64_t seed = 0;
};

using SnapshotSink = std::function<void(const GridField&, double t, long step)>;

// Integrate one path to t_end or a terminal status, reusing a caller-owned
// stepper (plans and mode tables survive across paths within a worker).
inline PathResult run_path_with(Stepper& stepper, const GridField& u0, std::uint64_t seed,
                                const SnapshotSink& snapshot = {}) {
  const SolverConfig& cfg = stepper.config();
  SimState state = stepper.make_state(u0);
  Rng wstream(derive_stream(seed, stream::common_noise));

  PathResult out;
  out.seed = seed;

  auto record = [&](const Moments& m) {
    MomentSample row;
    row.t = state.t;
    row.m = m;
    row.acc_a = state.acc_a;
    row.acc_b = state.acc_b;
    row.status = state.status;
    row.has_accumulators = true;
    out.series.rows.push_back(row);
  };

  record(compute_moments(state.u));
  if (snapshot) snapshot(state.u, state.t, 0);

  std::vector<double> dw;
  const long max_steps = static_cast<long>(std::ceil(cfg.t_end / cfg.dt - 1e-9));
  while (state.status == PathStatus::running && state.step < max_steps) {
    stepper.draw_increments(wstream, dw);
    const Moments m = stepper.advance(state, dw);
    const bool terminal = state.status != PathStatus::running;
    if (state.step % cfg.record_every == 0 || terminal) record(m);
    if (snapshot && cfg.snapshot_every > 0 && state.step % cfg.snapshot_every == 0)
      snapshot(state.u, state.t, state.step);
  }
  if (state.status == PathStatus::running) state.status = PathStatus::completed;
  if (!out.series.rows.empty()) out.series.rows.back().status = state.status;

  out.status = state.status;
  out.t_blow = state.t_blow;
  out.neg_warning = state.neg_warning;
  return out;
}

// Deterministic given (cfg.seed, noise, u0): the common-noise stream is
// derived from cfg.seed by the documented splitting rule.
inline PathResult run_path(const SolverConfig& cfg, const NoiseModel& noise, const GridField& u0,
                           const SnapshotSink& snapshot = {}) {
  Stepper stepper(cfg, noise);
  return run_path_with(stepper, u0, stepper.config().seed, snapshot);
}

}  // namespace sks
