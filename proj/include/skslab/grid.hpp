#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "skslab/vec.hpp"

namespace sks {

// Periodic N x N scalar field on a square box of side L, cell spacing h = L/N.
// Values live at the points x_i = (i - N/2) h. Storage is row major, index
// i*N + j, with i the x index and j the y index. Integrals are plain cell
// sums times h^2.
class GridField {
 public:
  GridField(int n, double box) : n_(n), box_(box), v_(static_cast<size_t>(n) * n, 0.0) {
    if (n < 32 || (n & (n - 1)) != 0)
      throw std::invalid_argument("GridField: N must be a power of two >= 32");
    if (!(box > 0.0)) throw std::invalid_argument("GridField: box size must be positive");
  }

  int n() const { return n_; }
  double box() const { return box_; }
  double spacing() const { return box_ / n_; }
  double cell_area() const { return spacing() * spacing(); }

  double coord(int idx) const { return (idx - n_ / 2) * spacing(); }

  double& operator()(int i, int j) { return v_[static_cast<size_t>(i) * n_ + j]; }
  double operator()(int i, int j) const { return v_[static_cast<size_t>(i) * n_ + j]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  size_t size() const { return v_.size(); }

  void fill(double c) {
    for (auto& x : v_) x = c;
  }

  double mass() const {
    double s = 0.0;
    for (double x : v_) s += x;
    return s * cell_area();
  }

  double mean() const {
    double s = 0.0;
    for (double x : v_) s += x;
    return s / static_cast<double>(v_.size());
  }

  double linf() const {
    double m = 0.0;
    for (double x : v_) m = std::fmax(m, std::fabs(x));
    return m;
  }

  double min_value() const {
    double m = v_[0];
    for (double x : v_) m = std::fmin(m, x);
    return m;
  }

  // L^2(R^2) norm under the cell-sum quadrature
  double l2_norm() const {
    double s = 0.0;
    for (double x : v_) s += x * x;
    return std::sqrt(s * cell_area());
  }

  // squared L^2 norm of the negative part, S[u] = ||u^-||_{L^2}^2
  double negative_part_l2sq() const {
    double s = 0.0;
    for (double x : v_) {
      if (x < 0.0) s += x * x;
    }
    return s * cell_area();
  }

  bool finite() const {
    for (double x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  // Mass carried by the outermost ring of cells, as a fraction of total mass.
  // Genuine domain-truncation leakage is locally positive density; the global
  // sinc imprint of spectral truncation is sign-alternating. The ring only
  // counts as leaked when its positive part dominates its negative part, so
  // the guard responds to transported mass and not to dealias ringing.
  double boundary_mass_fraction() const {
    double pos = 0.0, neg = 0.0;
    const int m = n_ - 1;
    auto add = [&](double x) { (x >= 0.0 ? pos : neg) += std::fabs(x); };
    for (int j = 0; j < n_; ++j) {
      add((*this)(0, j));
      add((*this)(m, j));
    }
    for (int i = 1; i < m; ++i) {
      add((*this)(i, 0));
      add((*this)(i, m));
    }
    if (pos <= 5.0 * neg) return 0.0;
    double tot = 0.0;
    for (double x : v_) tot += x;
    return tot > 0.0 ? pos / tot : 0.0;
  }

 private:
  int n_;
  double box_;
  std::vector<double> v_;
};

struct VectorField {
  GridField x;
  GridField y;

  VectorField(int n, double box) : x(n, box), y(n, box) {}
  explicit VectorField(GridField fx, GridField fy) : x(std::move(fx)), y(std::move(fy)) {}

  int n() const { return x.n(); }
  double box() const { return x.box(); }
  bool finite() const { return x.finite() && y.finite(); }
};

}  // namespace sks
