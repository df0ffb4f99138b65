#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentpde/fft.hpp"
#include "latentpde/field.hpp"

// Mode-wise transfer solver for linear constant-coefficient PDEs on the periodic unit square.
//
//   u_out(k) = G(k; theta, T) u0(k) + H(k; theta, T) f(k),   k = 2 pi n
//
// Advection-diffusion:  lambda = -i (vx kx + vy ky) - kappa |k|^2,  G = exp(lambda T),
//                       H = (exp(lambda T) - 1) / lambda           (H -> T as lambda -> 0)
// Klein-Gordon:         omega^2 = cx^2 kx^2 + cy^2 ky^2 + m^2,     G = cos(omega T),
//                       H = (1 - cos(omega T)) / omega^2           (H -> T^2/2 as omega -> 0)
// Helmholtz (static):   D = kappa_x kx^2 + kappa_y ky^2 + k^2,     G = H = 1 / D

namespace latentpde::spectral {

using cplx = std::complex<double>;

enum class PdeFamily { AdvectionDiffusion, KleinGordon, Helmholtz };

inline std::string to_string(PdeFamily f) {
  switch (f) {
    case PdeFamily::AdvectionDiffusion: return "advection_diffusion";
    case PdeFamily::KleinGordon: return "klein_gordon";
    case PdeFamily::Helmholtz: return "helmholtz";
  }
  return "unknown";
}

inline PdeFamily family_from_string(const std::string& s) {
  if (s == "advection_diffusion") return PdeFamily::AdvectionDiffusion;
  if (s == "klein_gordon") return PdeFamily::KleinGordon;
  if (s == "helmholtz") return PdeFamily::Helmholtz;
  throw std::invalid_argument("unknown PDE family '" + s + "'");
}

/// (vx, vy, kappa) | (cx, cy, m) | (kappa_x, kappa_y, k), plus the time horizon of evolutionary families.
struct PhysicalParams {
  std::array<double, 3> theta{};
  double horizon = 1.0;
};

/// Physical wavevector of one Fourier mode. `odd` components are used by first-derivative terms and
/// vanish on the Nyquist line so that the multiplier stays Hermitian; `even` components feed |k|^2.
struct Wavevector {
  double kx_even = 0, ky_even = 0;
  double kx_odd = 0, ky_odd = 0;
};

inline Wavevector wavevector(int row, int col, Resolution res) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const int ny = fft_frequency(row, res.height);
  const int nx = fft_frequency(col, res.width);
  Wavevector k;
  k.kx_even = two_pi * nx;
  k.ky_even = two_pi * ny;
  k.kx_odd = (res.width % 2 == 0 && 2 * nx == res.width) ? 0.0 : k.kx_even;
  k.ky_odd = (res.height % 2 == 0 && 2 * ny == res.height) ? 0.0 : k.ky_even;
  return k;
}

/// Switch to the series branch below these values of |lambda| T and omega T.
inline constexpr double kAdSeriesThreshold = 1e-6;
inline constexpr double kKgSeriesThreshold = 1e-4;

struct Transfer {
  cplx G;
  cplx H;
};

/// Transfer multipliers together with their derivatives in theta_j.
struct TransferJet {
  cplx G;
  cplx H;
  std::array<cplx, 3> dG{};
  std::array<cplx, 3> dH{};
};

namespace detail {

inline cplx expm1(cplx z) {
  // exp(a+ib) - 1 = expm1(a) cos b - 2 sin^2(b/2) + i e^a sin b, accurate for small |z|.
  const double a = z.real();
  const double b = z.imag();
  const double s = std::sin(0.5 * b);
  return {std::expm1(a) * std::cos(b) - 2.0 * s * s, std::exp(a) * std::sin(b)};
}

inline void check_theta(const PhysicalParams& p) {
  for (double t : p.theta) {
    if (!std::isfinite(t)) throw std::invalid_argument("transfer_multipliers: non-finite theta");
  }
  if (!std::isfinite(p.horizon)) throw std::invalid_argument("transfer_multipliers: non-finite horizon");
}

/// H(lambda) = (e^{lambda T} - 1)/lambda and dH/dlambda, with a Taylor branch near lambda = 0.
inline void ad_forcing(cplx lambda, double T, cplx& H, cplx& dH) {
  const cplx x = lambda * T;
  if (std::abs(x) < kAdSeriesThreshold) {
    H = T * (1.0 + x / 2.0 + x * x / 6.0);
    dH = T * T * (0.5 + x / 3.0 + x * x / 8.0);
    return;
  }
  H = expm1(x) / lambda;
  dH = (T * std::exp(x) - H) / lambda;
}

}  // namespace detail

/// Transfer multipliers at one wavevector, with derivatives for the adjoint path.
inline TransferJet transfer_jet(PdeFamily family, const PhysicalParams& p, const Wavevector& k) {
  detail::check_theta(p);
  const auto& th = p.theta;
  const double T = p.horizon;
  TransferJet out;
  switch (family) {
    case PdeFamily::AdvectionDiffusion: {
      const double k2 = k.kx_even * k.kx_even + k.ky_even * k.ky_even;
      const cplx lambda{-th[2] * k2, -(th[0] * k.kx_odd + th[1] * k.ky_odd)};
      const cplx G = std::exp(lambda * T);
      cplx H, dHdl;
      detail::ad_forcing(lambda, T, H, dHdl);
      const cplx dGdl = T * G;
      const std::array<cplx, 3> dl{cplx{0.0, -k.kx_odd}, cplx{0.0, -k.ky_odd}, cplx{-k2, 0.0}};
      out.G = G;
      out.H = H;
      for (int j = 0; j < 3; ++j) {
        out.dG[j] = dGdl * dl[j];
        out.dH[j] = dHdl * dl[j];
      }
      break;
    }
    case PdeFamily::KleinGordon: {
      const double w2 = th[0] * th[0] * k.kx_even * k.kx_even + th[1] * th[1] * k.ky_even * k.ky_even + th[2] * th[2];
      const double w = std::sqrt(w2);
      const double x = w * T;
      double G, H, dGdw2, dHdw2;
      if (x < kKgSeriesThreshold) {
        const double x2 = x * x;
        G = 1.0 - x2 / 2.0 + x2 * x2 / 24.0;
        H = T * T * (0.5 - x2 / 24.0 + x2 * x2 / 720.0);
        dGdw2 = T * T * (-0.5 + x2 / 12.0);
        dHdw2 = T * T * T * T * (-1.0 / 24.0 + x2 / 360.0);
      } else {
        const double s = std::sin(0.5 * x);
        G = std::cos(x);
        H = 2.0 * s * s / w2;
        dGdw2 = -std::sin(x) * T / (2.0 * w);
        dHdw2 = (std::sin(x) * T / (2.0 * w) - H) / w2;
      }
      const std::array<double, 3> dw2{2.0 * th[0] * k.kx_even * k.kx_even, 2.0 * th[1] * k.ky_even * k.ky_even,
                                      2.0 * th[2]};
      out.G = G;
      out.H = H;
      for (int j = 0; j < 3; ++j) {
        out.dG[j] = dGdw2 * dw2[j];
        out.dH[j] = dHdw2 * dw2[j];
      }
      break;
    }
    case PdeFamily::Helmholtz: {
      const double kx2 = k.kx_even * k.kx_even;
      const double ky2 = k.ky_even * k.ky_even;
      const double D = th[0] * kx2 + th[1] * ky2 + th[2] * th[2];
      if (!(D > 0.0)) throw std::domain_error("transfer_multipliers: Helmholtz denominator is not positive");
      const double inv = 1.0 / D;
      const std::array<double, 3> dD{kx2, ky2, 2.0 * th[2]};
      out.G = inv;
      out.H = inv;
      for (int j = 0; j < 3; ++j) {
        out.dG[j] = -inv * inv * dD[j];
        out.dH[j] = out.dG[j];
      }
      break;
    }
  }
  return out;
}

/// Transfer multipliers (G, H) for integer mode (nx, ny); the physical wavevector is 2 pi n.
inline Transfer transfer_multipliers(PdeFamily family, const PhysicalParams& p, int nx, int ny) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Wavevector k;
  k.kx_even = k.kx_odd = two_pi * nx;
  k.ky_even = k.ky_odd = two_pi * ny;
  const TransferJet jet = transfer_jet(family, p, k);
  return {jet.G, jet.H};
}

/// Spectra are stored unnormalized (DFT convention); resampling keeps Fourier-series amplitudes fixed,
/// so zero-padding is band-limited interpolation and the reverse direction is spectral truncation.
/// A source Nyquist bin is split evenly over +-n/2 on upsampling; modes landing on the target Nyquist
/// bin are accumulated.
inline ComplexField spectral_resample(const ComplexField& src, Resolution dst) {
  require_valid(dst, "spectral_resample");
  const Resolution s = src.resolution();
  auto axis_map = [](int n_src, int n_dst) {
    std::vector<std::vector<std::pair<int, double>>> map(n_src);
    for (int i = 0; i < n_src; ++i) {
      const int f = fft_frequency(i, n_src);
      const bool src_nyquist = (n_src % 2 == 0) && (2 * f == n_src);
      if (src_nyquist && n_dst > n_src) {
        map[i].emplace_back(fft_index(f, n_dst), 0.5);
        map[i].emplace_back(fft_index(-f, n_dst), 0.5);
      } else if (2 * std::abs(f) <= n_dst) {
        map[i].emplace_back(fft_index(f, n_dst), 1.0);
      }
    }
    return map;
  };
  const auto rows = axis_map(s.height, dst.height);
  const auto cols = axis_map(s.width, dst.width);
  const double scale = static_cast<double>(dst.cells()) / static_cast<double>(s.cells());
  ComplexField out(dst);
  for (int i = 0; i < s.height; ++i) {
    for (int j = 0; j < s.width; ++j) {
      const cplx v = src(i, j) * scale;
      for (auto [di, wi] : rows[i])
        for (auto [dj, wj] : cols[j]) out(di, dj) += v * (wi * wj);
    }
  }
  return out;
}

/// Band-limited resampling of a real field (zero-pad up, truncate down).
inline Field resample(const Field& f, Resolution dst) {
  if (f.resolution() == dst) return f;
  return fft::inverse_real(spectral_resample(fft::forward(f), dst));
}

/// Inverts avg_pool(., p) in the band-limited sense: pooled samples sit at block centres, offset
/// (p - 1) / (2 N_hr) from the fine grid, and carry the box transfer sin(pi f p / N) / (p sin(pi f / N))
/// per axis. Both are undone mode by mode before zero-padding. Nyquist bins are passed through.
inline Field lift_pooled(const Field& coarse, int p) {
  if (p < 1) throw std::invalid_argument("lift_pooled: factor must be >= 1, got " + std::to_string(p));
  if (p == 1) return coarse;
  const Resolution lr = coarse.resolution();
  const Resolution hr{lr.height * p, lr.width * p};
  ComplexField spec = fft::forward(coarse);
  auto axis = [p](int f, int n_lr, int n_hr) -> cplx {
    if ((n_lr % 2 == 0) && 2 * std::abs(f) == n_lr) return 1.0;
    const double shift = static_cast<double>(p - 1) / (2.0 * n_hr);
    const double box = f == 0 ? 1.0 : std::sin(std::numbers::pi * f / n_lr) / (p * std::sin(std::numbers::pi * f / n_hr));
    return std::polar(1.0 / box, -2.0 * std::numbers::pi * f * shift);
  };
  for (int i = 0; i < lr.height; ++i) {
    const cplx ay = axis(fft_frequency(i, lr.height), lr.height, hr.height);
    for (int j = 0; j < lr.width; ++j) spec(i, j) *= ay * axis(fft_frequency(j, lr.width), lr.width, hr.width);
  }
  return fft::inverse_real(spectral_resample(spec, hr));
}

/// Applies the transfer multipliers to precomputed spectra on a common grid.
inline ComplexField apply_transfer(const ComplexField& u0_hat, const ComplexField& f_hat, PdeFamily family,
                                   const PhysicalParams& p) {
  require_same_grid(u0_hat.resolution(), f_hat.resolution(), "apply_transfer");
  const Resolution res = u0_hat.resolution();
  ComplexField out(res);
  for (int i = 0; i < res.height; ++i) {
    for (int j = 0; j < res.width; ++j) {
      const TransferJet t = transfer_jet(family, p, wavevector(i, j, res));
      out(i, j) = t.G * u0_hat(i, j) + t.H * f_hat(i, j);
    }
  }
  return out;
}

/// Solves one PDE instance: u_out = F^-1[ G F[u0] + H F[f] ].
inline Field forward_solve(const Field& u0, const Field& f, PdeFamily family, const PhysicalParams& p,
                           double* max_imag = nullptr) {
  require_same_grid(u0.resolution(), f.resolution(), "forward_solve");
  require_finite(u0.values(), "forward_solve u0");
  require_finite(f.values(), "forward_solve forcing");
  return fft::inverse_real(apply_transfer(fft::forward(u0), fft::forward(f), family, p), max_imag);
}

}  // namespace latentpde::spectral
