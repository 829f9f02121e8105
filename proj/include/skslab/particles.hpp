#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "skslab/covariance.hpp"
#include "skslab/rng.hpp"
#include "skslab/vec.hpp"

namespace sks {

// Interacting-particle discretisation used as a grid-free oracle:
//   dX_i = (chi/N) sum_{j != i} gradK(X_i - X_j) dt + sqrt(2) dB_i
//          - sqrt(2 gamma) sum_k sigma_k(X_i) dW^k,
// gradK(z) = -(1/2pi) z/|z|^2. The W^k are the same common-noise increments
// the PDE path uses (identical stream when seeded identically); the sign
// matches the conservative form + sqrt(2 gamma) Div(sigma_k u) dW^k, under
// which C[u_t] = -A_t. The Stratonovich-Ito correction for the particle noise
// vanishes pointwise: sum_k (grad sigma_k) sigma_k = 0 for this family.
struct ParticleSystem {
  std::vector<Vec2> pos;
  double chi = 0.0;
  double gamma = 0.0;
  double eps_core = 1e-3;            // kernel regularisation radius
  long long regularization_events = 0;

  int count() const { return static_cast<int>(pos.size()); }
};

struct ParticleMoments {
  Vec2 center;   // X bar
  double v = 0.0;  // (1/2N) sum |X_i - X bar|^2
};

inline ParticleMoments particle_moments(const ParticleSystem& sys) {
  ParticleMoments m;
  const int n = sys.count();
  if (n == 0) return m;
  Vec2 c;
  for (const Vec2& x : sys.pos) c += x;
  c = c / static_cast<double>(n);
  double v = 0.0;
  for (const Vec2& x : sys.pos) v += (x - c).norm2();
  m.center = c;
  m.v = 0.5 * v / static_cast<double>(n);
  return m;
}

namespace detail {

// pairwise attraction on a contiguous index range; full j loop in fixed
// order, so the result is independent of how ranges are assigned to threads
inline void interaction_forces(const ParticleSystem& sys, int begin, int end,
                               std::vector<Vec2>& force, long long& regularized) {
  const int n = sys.count();
  const double eps2 = sys.eps_core * sys.eps_core;
  const double scale = -sys.chi / (2.0 * M_PI * n);
  for (int i = begin; i < end; ++i) {
    Vec2 f;
    const Vec2 xi = sys.pos[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec2 d = xi - sys.pos[static_cast<size_t>(j)];
      double r2 = d.norm2();
      if (r2 < eps2) {
        r2 = eps2;
        ++regularized;
      }
      f += d / r2;
    }
    force[static_cast<size_t>(i)] = f * scale;
  }
}

}  // namespace detail

// One Euler-Maruyama step. dw carries the common-noise increments (one per
// mode, N(0,dt)); b_rng supplies the independent per-particle Brownian
// increments, drawn in particle order.
inline void step_particles(ParticleSystem& sys, double dt, const NoiseModel& noise,
                           std::span<const double> dw, Rng& b_rng, int threads = 1) {
  const int n = sys.count();
  if (n < 2) throw std::invalid_argument("step_particles: need at least two particles");
  if (static_cast<int>(dw.size()) != noise.mode_count())
    throw std::invalid_argument("step_particles: increment count does not match mode count");

  std::vector<Vec2> force(static_cast<size_t>(n));
  if (threads <= 1 || n < 512) {
    long long reg = 0;
    detail::interaction_forces(sys, 0, n, force, reg);
    sys.regularization_events += reg;
  } else {
    const int nt = std::min<int>(threads, std::max(1u, std::thread::hardware_concurrency()));
    std::vector<long long> regs(static_cast<size_t>(nt), 0);
    std::vector<std::thread> pool;
    for (int w = 0; w < nt; ++w) {
      const int begin = static_cast<int>(static_cast<long long>(n) * w / nt);
      const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / nt);
      pool.emplace_back([&, w, begin, end] {
        detail::interaction_forces(sys, begin, end, force, regs[static_cast<size_t>(w)]);
      });
    }
    for (auto& th : pool) th.join();
    for (long long r : regs) sys.regularization_events += r;
  }

  const double noise_w = std::sqrt(2.0 * sys.gamma);
  const double diff_w = std::sqrt(2.0 * dt);
  for (int i = 0; i < n; ++i) {
    Vec2& x = sys.pos[static_cast<size_t>(i)];
    Vec2 drift = force[static_cast<size_t>(i)] * dt;
    Vec2 common;
    for (int k = 0; k < noise.mode_count(); ++k) common += noise.sigma(k, x) * dw[static_cast<size_t>(k)];
    const Vec2 db = b_rng.normal2();
    x += drift + db * diff_w - common * noise_w;
  }
}

}  // namespace sks
