#pragma once

// Independent reference computations used by the unit and acceptance tests. Nothing here calls the
// spectral machinery of the library.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "latentpde/field.hpp"

namespace oracle {

using latentpde::Field;
using latentpde::Resolution;

/// Real trigonometric polynomial sum_{|nx|,|ny| <= n_max} a cos(phase) + b sin(phase).
struct TrigPoly {
  struct Term {
    int nx, ny;
    double a, b;
  };
  std::vector<Term> terms;

  double operator()(double x, double y) const {
    double v = 0.0;
    for (const auto& t : terms) {
      const double ph = 2.0 * std::numbers::pi * (t.nx * x + t.ny * y);
      v += t.a * std::cos(ph) + t.b * std::sin(ph);
    }
    return v;
  }

  /// Samples at cell corners x = j / W, y = i / H (the FFT grid points).
  Field sample(Resolution res) const {
    Field f(res);
    for (int i = 0; i < res.height; ++i)
      for (int j = 0; j < res.width; ++j) f(i, j) = (*this)(static_cast<double>(j) / res.width, static_cast<double>(i) / res.height);
    return f;
  }

  static TrigPoly random(int n_max, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    TrigPoly p;
    for (int ny = 0; ny <= n_max; ++ny)
      for (int nx = -n_max; nx <= n_max; ++nx) {
        if (ny == 0 && nx < 0) continue;
        p.terms.push_back({nx, ny, scale * n01(rng), (nx == 0 && ny == 0) ? 0.0 : scale * n01(rng)});
      }
    return p;
  }
};

/// Converged finite-difference solution of u_t + v . grad u = kappa lap u + f on the periodic unit
/// square. Fourth-order central differences on an n x n grid and classical RK4 in time.
inline Field fd_advection_diffusion(const Field& u0, const Field& f, double vx, double vy, double kappa, double T,
                                    double cfl = 0.2) {
  const int n = u0.height();
  const double h = 1.0 / n;
  auto w = [n](int i) { return ((i % n) + n) % n; };
  auto rhs = [&](const Field& u) {
    Field r(u.resolution());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double ux = (-u(i, w(j + 2)) + 8 * u(i, w(j + 1)) - 8 * u(i, w(j - 1)) + u(i, w(j - 2))) / (12 * h);
        const double uy = (-u(w(i + 2), j) + 8 * u(w(i + 1), j) - 8 * u(w(i - 1), j) + u(w(i - 2), j)) / (12 * h);
        const double uxx =
            (-u(i, w(j + 2)) + 16 * u(i, w(j + 1)) - 30 * u(i, j) + 16 * u(i, w(j - 1)) - u(i, w(j - 2))) / (12 * h * h);
        const double uyy =
            (-u(w(i + 2), j) + 16 * u(w(i + 1), j) - 30 * u(i, j) + 16 * u(w(i - 1), j) - u(w(i - 2), j)) / (12 * h * h);
        r(i, j) = -vx * ux - vy * uy + kappa * (uxx + uyy) + f(i, j);
      }
    return r;
  };
  const double dt_diff = kappa > 0 ? cfl * h * h / kappa : 1e9;
  const double speed = std::abs(vx) + std::abs(vy);
  const double dt_adv = speed > 0 ? 4.0 * cfl * h / speed : 1e9;
  const int steps = std::max(1, static_cast<int>(std::ceil(T / std::min(dt_diff, dt_adv))));
  const double dt = T / steps;
  Field u = u0;
  for (int s = 0; s < steps; ++s) {
    const Field k1 = rhs(u);
    const Field k2 = rhs(u + (0.5 * dt) * k1);
    const Field k3 = rhs(u + (0.5 * dt) * k2);
    const Field k4 = rhs(u + dt * k3);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return u;
}

/// Every p-th grid point, starting at the origin.
inline Field subsample(const Field& f, int p) {
  Field out(Resolution{f.height() / p, f.width() / p});
  for (int i = 0; i < out.height(); ++i)
    for (int j = 0; j < out.width(); ++j) out(i, j) = f(i * p, j * p);
  return out;
}

inline double relative_l2(const Field& a, const Field& ref) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

inline double max_abs_diff(const Field& a, const Field& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Direct evaluation of a truncated forcing block as a sine-cosine series:
/// f = sum_{ky,kx} w(kx) (a cos(phase) - b sin(phase)), w(0) = 1, w(kx>0) = 2.
inline Field forcing_series(const std::vector<double>& q, int modes, Resolution res) {
  Field f(res);
  for (int band = 0; band < 2; ++band)
    for (int r = 0; r < modes; ++r)
      for (int c = 0; c < modes; ++c) {
        const std::size_t off = static_cast<std::size_t>(band * 2 * modes * modes + (r * modes + c) * 2);
        const int ky = band == 0 ? r : r - modes;
        const double wgt = c == 0 ? 1.0 : 2.0;
        for (int i = 0; i < res.height; ++i)
          for (int j = 0; j < res.width; ++j) {
            const double ph = 2.0 * std::numbers::pi * (c * static_cast<double>(j) / res.width + ky * static_cast<double>(i) / res.height);
            f(i, j) += wgt * (q[off] * std::cos(ph) - q[off + 1] * std::sin(ph));
          }
      }
  return f;
}

/// Central finite-difference gradient of a scalar function of a vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                       std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = fn(x);
    x[i] = x0 - step;
    const double fm = fn(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * step);
  }
  return g;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor): gradient comparison insensitive to tiny components.
inline double gradient_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double num = 0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

}  // namespace oracle
