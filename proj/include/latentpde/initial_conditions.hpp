#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "latentpde/fft.hpp"
#include "latentpde/field.hpp"
#include "latentpde/random.hpp"

namespace latentpde::datagen {

enum class IcKind { BroadbandFourier, Front, VortexDipole, MultiscaleGaussianFourier };

inline constexpr std::array<IcKind, 4> kAllIcKinds{IcKind::BroadbandFourier, IcKind::Front, IcKind::VortexDipole,
                                                   IcKind::MultiscaleGaussianFourier};

inline std::string to_string(IcKind k) {
  switch (k) {
    case IcKind::BroadbandFourier: return "broadband_fourier";
    case IcKind::Front: return "front";
    case IcKind::VortexDipole: return "vortex_dipole";
    case IcKind::MultiscaleGaussianFourier: return "multiscale_gaussian_fourier";
  }
  return "unknown";
}

inline IcKind ic_kind_from_string(const std::string& s) {
  for (IcKind k : kAllIcKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown initial-condition kind '" + s + "'");
}

/// Tunables of the IC generators.
struct IcConfig {
  double broadband_decay = 1.0;     // spectral amplitude ~ |n|^-decay
  double front_sharpness = 20.0;    // tanh(sharpness * g)
  int front_level_modes = 3;        // max |n| of the level function
  double dipole_width_min = 0.05, dipole_width_max = 0.15;
  int multiscale_bumps = 3;
  int multiscale_modes = 4;
  double multiscale_noise = 0.3;
};

namespace detail {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Signed periodic offset on the unit interval, in [-0.5, 0.5).
inline double wrap_offset(double d) { return d - std::floor(d + 0.5); }

/// Random real trigonometric polynomial with |nx|, |ny| <= n_max and amplitude ~ |n|^-decay.
inline Field low_mode_noise(Resolution res, int n_max, double decay, Rng& rng) {
  ComplexField spec(res);
  for (int ny = -n_max; ny <= n_max; ++ny)
    for (int nx = -n_max; nx <= n_max; ++nx) {
      if (nx == 0 && ny == 0) continue;
      if (2 * std::abs(nx) >= res.width || 2 * std::abs(ny) >= res.height) continue;
      const double amp = std::pow(std::hypot(nx, ny), -decay);
      spec(fft_index(ny, res.height), fft_index(nx, res.width)) = {amp * standard_normal(rng), amp * standard_normal(rng)};
    }
  // Real part of the inverse of an arbitrary spectrum is the inverse of its Hermitian projection.
  return fft::inverse_real(spec);
}

inline double periodic_gaussian(double x, double y, double cx, double cy, double w) {
  const double dx = wrap_offset(x - cx), dy = wrap_offset(y - cy);
  return std::exp(-(dx * dx + dy * dy) / (2 * w * w));
}

}  // namespace detail

/// Shifts and scales to sample mean 0 and population std 1. Returns false for a constant field.
inline bool standardize(Field& f) {
  const double m = mean(f);
  for (auto& v : f.storage()) v -= m;
  const double s = stddev(f);
  if (!(s > 1e-12)) return false;
  for (auto& v : f.storage()) v /= s;
  // A second pass removes the rounding residue of the first.
  const double m2 = mean(f);
  for (auto& v : f.storage()) v -= m2;
  const double s2 = stddev(f);
  for (auto& v : f.storage()) v /= s2;
  return true;
}

inline Field generate_initial_condition(IcKind kind, Resolution res, Rng& rng, const IcConfig& cfg = {}) {
  if (res.height < 8 || res.width < 8)
    throw std::invalid_argument("generate_initial_condition: grid " + to_string(res) + " is smaller than 8x8");
  for (int attempt = 0; attempt < 16; ++attempt) {
    Field f(res);
    switch (kind) {
      case IcKind::BroadbandFourier: {
        f = detail::low_mode_noise(res, std::max(res.height, res.width) / 2, cfg.broadband_decay, rng);
        break;
      }
      case IcKind::Front: {
        Field g = detail::low_mode_noise(res, cfg.front_level_modes, 1.0, rng);
        if (!standardize(g)) continue;
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::tanh(cfg.front_sharpness * g[i]);
        break;
      }
      case IcKind::VortexDipole: {
        const double cx = uniform(rng), cy = uniform(rng);
        const double angle = uniform(rng, 0.0, detail::kTwoPi);
        const double sep = uniform(rng, 0.15, 0.35);
        const double w1 = uniform(rng, cfg.dipole_width_min, cfg.dipole_width_max);
        const double w2 = uniform(rng, cfg.dipole_width_min, cfg.dipole_width_max);
        const double ax = cx + 0.5 * sep * std::cos(angle), ay = cy + 0.5 * sep * std::sin(angle);
        const double bx = cx - 0.5 * sep * std::cos(angle), by = cy - 0.5 * sep * std::sin(angle);
        for (int i = 0; i < res.height; ++i)
          for (int j = 0; j < res.width; ++j) {
            const double x = static_cast<double>(j) / res.width, y = static_cast<double>(i) / res.height;
            f(i, j) = detail::periodic_gaussian(x, y, ax, ay, w1) - detail::periodic_gaussian(x, y, bx, by, w2);
          }
        break;
      }
      case IcKind::MultiscaleGaussianFourier: {
        f = detail::low_mode_noise(res, cfg.multiscale_modes, 1.0, rng);
        standardize(f);
        for (auto& v : f.storage()) v *= cfg.multiscale_noise;
        for (int b = 0; b < cfg.multiscale_bumps; ++b) {
          const double cx = uniform(rng), cy = uniform(rng);
          const double w = uniform(rng, 0.03, 0.2);
          const double amp = uniform(rng, 0.5, 1.5) * (uniform(rng) < 0.5 ? -1.0 : 1.0);
          for (int i = 0; i < res.height; ++i)
            for (int j = 0; j < res.width; ++j)
              f(i, j) += amp * detail::periodic_gaussian(static_cast<double>(j) / res.width,
                                                         static_cast<double>(i) / res.height, cx, cy, w);
        }
        break;
      }
    }
    if (standardize(f)) return f;
  }
  throw std::runtime_error("generate_initial_condition: generator kept producing constant fields");
}

}  // namespace latentpde::datagen
