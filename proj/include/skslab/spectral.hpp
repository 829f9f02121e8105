#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "skslab/grid.hpp"

namespace sks {

enum class DealiasRule { two_thirds, none };
enum class ChemicalMethod { periodic_spectral, free_space_padded };

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// One grid size worth of FFTW plans and scratch buffers. Plans are created
// with FFTW_ESTIMATE so the algorithm choice is a pure heuristic and results
// are bit-reproducible run to run.
struct FftPair {
  int n = 0;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  FftPair() = default;

  void init(int n_) {
    n = n_;
    real = fftw_alloc_real(static_cast<size_t>(n) * n);
    cplx = fftw_alloc_complex(static_cast<size_t>(n) * (n / 2 + 1));
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_2d(n, n, real, cplx, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_2d(n, n, cplx, real, FFTW_ESTIMATE);
  }

  ~FftPair() {
    if (fwd || bwd) {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      if (fwd) fftw_destroy_plan(fwd);
      if (bwd) fftw_destroy_plan(bwd);
    }
    if (real) fftw_free(real);
    if (cplx) fftw_free(cplx);
  }

  FftPair(const FftPair&) = delete;
  FftPair& operator=(const FftPair&) = delete;
};

}  // namespace detail

// Per-worker spectral engine: caches FFTW plans for the N grid and the 2N
// zero-padded grid, plus the tabulated free-space kernel transform. Not
// thread safe; each worker owns one. Fields passed in must share (n, box).
//
// r2c layout: after a forward transform the complex array has N rows (the x
// mode, full range) and N/2+1 columns (the y mode, truncated). First
// derivatives zero the Nyquist line, so divergence(gradient(f)) equals
// laplacian(f) only on fields with no Nyquist content; laplacian itself keeps
// the full -|k|^2 multiplier.
class SpectralWorkspace {
 public:
  SpectralWorkspace(int n, double box) : n_(n), box_(box) {
    if (n < 32 || (n & (n - 1)) != 0)
      throw std::invalid_argument("SpectralWorkspace: N must be a power of two >= 32");
    if (!(box > 0.0)) throw std::invalid_argument("SpectralWorkspace: box size must be positive");
    main_.init(n);
  }

  int n() const { return n_; }
  double box() const { return box_; }

  GridField laplacian(const GridField& f) {
    check(f);
    forward(f);
    for_each_mode([&](int ix, int jy, double kxv, double kyv) {
      const double k2 = kxv * kxv + kyv * kyv;
      fftw_complex& z = c(ix, jy);
      z[0] *= -k2;
      z[1] *= -k2;
    });
    return inverse();
  }

  VectorField gradient(const GridField& f) {
    check(f);
    forward(f);
    std::vector<double> snap = save_spectrum();
    apply_deriv(0);
    GridField gx = inverse();
    restore_spectrum(snap);
    apply_deriv(1);
    GridField gy = inverse();
    return VectorField(std::move(gx), std::move(gy));
  }

  GridField divergence(const VectorField& v) {
    check(v.x);
    check(v.y);
    forward(v.x);
    apply_deriv(0);
    std::vector<double> dx = save_spectrum();
    forward(v.y);
    apply_deriv(1);
    add_spectrum(dx);
    return inverse();
  }

  // scalar curl d(vy)/dx - d(vx)/dy; zero for gradient fields
  GridField curl(const VectorField& v) {
    check(v.x);
    check(v.y);
    forward(v.y);
    apply_deriv(0);
    std::vector<double> a = save_spectrum();
    forward(v.x);
    apply_deriv(1);
    scale_spectrum(-1.0);
    add_spectrum(a);
    return inverse();
  }

  GridField dealias(const GridField& f, DealiasRule rule) {
    if (rule == DealiasRule::none) return f;
    GridField out = f;
    dealias_in_place(out, rule);
    return out;
  }

  void dealias_in_place(GridField& f, DealiasRule rule) {
    if (rule == DealiasRule::none) return;
    check(f);
    forward(f);
    zero_above_two_thirds();
    inverse_into(f);
  }

  // max |mode index| with nonzero coefficient above the given magnitude floor
  int max_active_mode(const GridField& f, double floor) {
    check(f);
    forward(f);
    int mmax = 0;
    const double scale = 1.0 / (static_cast<double>(n_) * n_);
    for_each_mode([&](int ix, int jy, double, double) {
      const int mx = (ix <= n_ / 2) ? ix : ix - n_;
      fftw_complex& z = c(ix, jy);
      const double mag = std::hypot(z[0], z[1]) * scale;
      if (mag > floor) mmax = std::max(mmax, std::max(std::abs(mx), jy));
    });
    return mmax;
  }

  // Attraction field grad(c) with -Lap(c) = u.
  //
  // periodic_spectral: grad(c)^ = i k u^ / |k|^2, zero mode projected out
  // (c is defined up to a constant on the torus).
  //
  // free_space_padded: linear convolution with the tabulated R^2 kernel
  // grad K(z) = -(1/2pi) z/|z|^2 on a 2N x 2N zero-padded grid, cell-sum
  // quadrature weight h^2. The kernel self cell is set to 0, the symmetric
  // choice for an odd kernel.
  VectorField solve_chemical(const GridField& u, ChemicalMethod method) {
    check(u);
    if (!u.finite()) throw std::invalid_argument("solve_chemical: non-finite input");
    if (method == ChemicalMethod::periodic_spectral) return chemical_periodic(u);
    return chemical_free_space(u);
  }

 private:
  int n_;
  double box_;
  detail::FftPair main_;

  // padded machinery, built on first free-space solve
  detail::FftPair pad_;
  std::vector<double> kernel_hat_x_;
  std::vector<double> kernel_hat_y_;

  void check(const GridField& f) const {
    if (f.n() != n_ || f.box() != box_)
      throw std::invalid_argument("SpectralWorkspace: field does not match workspace grid");
  }

  fftw_complex& c(int ix, int jy) {
    return main_.cplx[static_cast<size_t>(ix) * (n_ / 2 + 1) + jy];
  }

  template <class F>
  void for_each_mode(F&& fn) {
    const int nch = n_ / 2 + 1;
    for (int ix = 0; ix < n_; ++ix) {
      const int mx = (ix <= n_ / 2) ? ix : ix - n_;
      const double kxv = 2.0 * M_PI * mx / box_;
      for (int jy = 0; jy < nch; ++jy) {
        const double kyv = 2.0 * M_PI * jy / box_;
        fn(ix, jy, kxv, kyv);
      }
    }
  }

  void forward(const GridField& f) {
    std::copy(f.data(), f.data() + f.size(), main_.real);
    fftw_execute(main_.fwd);
  }

  GridField inverse() {
    GridField out(n_, box_);
    inverse_into(out);
    return out;
  }

  void inverse_into(GridField& out) {
    fftw_execute(main_.bwd);
    const double scale = 1.0 / (static_cast<double>(n_) * n_);
    for (size_t k = 0; k < out.size(); ++k) out.data()[k] = main_.real[k] * scale;
  }

  size_t spectrum_size() const { return static_cast<size_t>(n_) * (n_ / 2 + 1); }

  std::vector<double> save_spectrum() {
    const size_t m = spectrum_size();
    std::vector<double> s(m * 2);
    for (size_t k = 0; k < m; ++k) {
      s[2 * k] = main_.cplx[k][0];
      s[2 * k + 1] = main_.cplx[k][1];
    }
    return s;
  }

  void restore_spectrum(const std::vector<double>& s) {
    const size_t m = spectrum_size();
    for (size_t k = 0; k < m; ++k) {
      main_.cplx[k][0] = s[2 * k];
      main_.cplx[k][1] = s[2 * k + 1];
    }
  }

  void add_spectrum(const std::vector<double>& s) {
    const size_t m = spectrum_size();
    for (size_t k = 0; k < m; ++k) {
      main_.cplx[k][0] += s[2 * k];
      main_.cplx[k][1] += s[2 * k + 1];
    }
  }

  void scale_spectrum(double a) {
    const size_t m = spectrum_size();
    for (size_t k = 0; k < m; ++k) {
      main_.cplx[k][0] *= a;
      main_.cplx[k][1] *= a;
    }
  }

  // multiply by i*k along the given axis (0 = x, 1 = y); Nyquist line zeroed
  void apply_deriv(int axis) {
    for_each_mode([&](int ix, int jy, double kxv, double kyv) {
      double k = (axis == 0) ? kxv : kyv;
      if ((axis == 0 && ix == n_ / 2) || (axis == 1 && jy == n_ / 2)) k = 0.0;
      fftw_complex& z = c(ix, jy);
      const double re = z[0], im = z[1];
      z[0] = -k * im;
      z[1] = k * re;
    });
  }

  void zero_above_two_thirds() {
    const int cut = n_ / 3;
    for_each_mode([&](int ix, int jy, double, double) {
      const int mx = (ix <= n_ / 2) ? ix : ix - n_;
      if (std::abs(mx) > cut || jy > cut) {
        fftw_complex& z = c(ix, jy);
        z[0] = 0.0;
        z[1] = 0.0;
      }
    });
  }

  VectorField chemical_periodic(const GridField& u) {
    VectorField out(n_, box_);
    forward(u);
    std::vector<double> base = save_spectrum();
    for (int axis = 0; axis < 2; ++axis) {
      restore_spectrum(base);
      for_each_mode([&](int ix, int jy, double kxv, double kyv) {
        fftw_complex& z = c(ix, jy);
        const double k2 = kxv * kxv + kyv * kyv;
        if (k2 == 0.0) {
          z[0] = z[1] = 0.0;
          return;
        }
        double k = (axis == 0) ? kxv : kyv;
        if ((axis == 0 && ix == n_ / 2) || (axis == 1 && jy == n_ / 2)) k = 0.0;
        // grad(c)^ = i k u^ / |k|^2
        const double re = z[0], im = z[1];
        z[0] = -k * im / k2;
        z[1] = k * re / k2;
      });
      inverse_into(axis == 0 ? out.x : out.y);
    }
    return out;
  }

  void ensure_padded() {
    if (pad_.real) return;
    const int p = 2 * n_;
    pad_.init(p);
    const double h = box_ / n_;
    const size_t m = static_cast<size_t>(p) * (p / 2 + 1);
    kernel_hat_x_.resize(2 * m);
    kernel_hat_y_.resize(2 * m);
    for (int comp = 0; comp < 2; ++comp) {
      for (int a = 0; a < p; ++a) {
        const int ca = (a <= n_ - 1) ? a : a - p;  // displacement in cells
        for (int b = 0; b < p; ++b) {
          const int cb = (b <= n_ - 1) ? b : b - p;
          const double zx = ca * h, zy = cb * h;
          const double r2 = zx * zx + zy * zy;
          double val = 0.0;
          if (r2 > 0.0) val = -(1.0 / (2.0 * M_PI)) * ((comp == 0) ? zx : zy) / r2;
          pad_.real[static_cast<size_t>(a) * p + b] = val;
        }
      }
      fftw_execute(pad_.fwd);
      auto& dst = (comp == 0) ? kernel_hat_x_ : kernel_hat_y_;
      for (size_t k = 0; k < m; ++k) {
        dst[2 * k] = pad_.cplx[k][0];
        dst[2 * k + 1] = pad_.cplx[k][1];
      }
    }
  }

  VectorField chemical_free_space(const GridField& u) {
    ensure_padded();
    const int p = 2 * n_;
    const size_t m = static_cast<size_t>(p) * (p / 2 + 1);
    const double h = u.spacing();

    std::fill(pad_.real, pad_.real + static_cast<size_t>(p) * p, 0.0);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) pad_.real[static_cast<size_t>(i) * p + j] = u(i, j);
    fftw_execute(pad_.fwd);
    std::vector<double> uhat(2 * m);
    for (size_t k = 0; k < m; ++k) {
      uhat[2 * k] = pad_.cplx[k][0];
      uhat[2 * k + 1] = pad_.cplx[k][1];
    }

    VectorField out(n_, box_);
    const double scale = h * h / (static_cast<double>(p) * p);
    for (int comp = 0; comp < 2; ++comp) {
      const auto& ker = (comp == 0) ? kernel_hat_x_ : kernel_hat_y_;
      for (size_t k = 0; k < m; ++k) {
        const double ar = uhat[2 * k], ai = uhat[2 * k + 1];
        const double br = ker[2 * k], bi = ker[2 * k + 1];
        pad_.cplx[k][0] = ar * br - ai * bi;
        pad_.cplx[k][1] = ar * bi + ai * br;
      }
      fftw_execute(pad_.bwd);
      GridField& dst = (comp == 0) ? out.x : out.y;
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
          dst(i, j) = pad_.real[static_cast<size_t>(i) * p + j] * scale;
    }
    return out;
  }
};

}  // namespace sks
