#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentpde/field.hpp"
#include "latentpde/random.hpp"
#include "latentpde/spectral.hpp"

namespace latentpde::datagen {

struct ObservationBundle {
  Field y;
  Mask mask;
  Field u0_lr;
  double sigma_obs = 0.0;
  int pool_factor = 1;
  spectral::PdeFamily family = spectral::PdeFamily::AdvectionDiffusion;
  std::string regime;
};

/// y = M (AvgPool_p(u_out_hr) + sigma eps); one standard normal is drawn per LR cell in row-major order.
inline Field observe(const Field& u_out_hr, int p, const Mask& mask, double sigma_obs, Rng& rng) {
  if (sigma_obs < 0.0) throw std::invalid_argument("make_observation: sigma_obs must be non-negative");
  const Field pooled = avg_pool(u_out_hr, p);
  require_same_grid(pooled.resolution(), mask.resolution(), "make_observation (pooled field vs mask)");
  Field y(pooled.resolution());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double eps = standard_normal(rng);
    y[i] = mask[i] * (pooled[i] + sigma_obs * eps);
  }
  return y;
}

inline ObservationBundle make_observation(const Field& u_out_hr, int p, const Mask& mask, double sigma_obs, Rng& rng) {
  ObservationBundle b;
  b.y = observe(u_out_hr, p, mask, sigma_obs, rng);
  b.mask = mask;
  b.sigma_obs = sigma_obs;
  b.pool_factor = p;
  return b;
}

inline constexpr int kDensityWindow = 7;

/// Periodic Euclidean distance (in cells) to the nearest observed cell divided by the grid diagonal.
/// With no observed cell the map saturates at 1.
inline Field distance_map(const Mask& m) {
  const int H = m.height(), W = m.width();
  std::vector<std::pair<int, int>> obs;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      if (m(i, j) > 0.5) obs.emplace_back(i, j);
  const double diag = std::hypot(static_cast<double>(H), static_cast<double>(W));
  Field d(m.resolution(), 1.0);
  if (obs.empty()) return d;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      int best = std::numeric_limits<int>::max();
      for (auto [oi, oj] : obs) {
        int di = std::abs(i - oi), dj = std::abs(j - oj);
        di = std::min(di, H - di);
        dj = std::min(dj, W - dj);
        best = std::min(best, di * di + dj * dj);
      }
      d(i, j) = std::sqrt(static_cast<double>(best)) / diag;
    }
  return d;
}

/// Mean of M over a periodic w x w window centred on each cell.
inline Field density_map(const Mask& m, int w = kDensityWindow) {
  if (w < 1 || w % 2 == 0) throw std::invalid_argument("density_map: window must be a positive odd integer");
  const int H = m.height(), W = m.width(), r = w / 2;
  Field rho(m.resolution());
  const double inv = 1.0 / (w * w);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0.0;
      for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b) acc += m(fft_index(i + a, H), fft_index(j + b, W));
      rho(i, j) = acc * inv;
    }
  return rho;
}

/// [y, M, d(M), rho(M)].
inline std::array<Field, 4> conditioning_channels(const Field& y, const Mask& m) {
  require_same_grid(y.resolution(), m.resolution(), "conditioning_channels");
  return {y, m, distance_map(m), density_map(m)};
}

}  // namespace latentpde::datagen
