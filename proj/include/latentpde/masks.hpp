#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentpde/field.hpp"
#include "latentpde/random.hpp"

// Mask generators. Each kind assigns a preference score to every cell (lower is observed first) and
// the n_obs lowest-scoring cells are kept, so the observed count is always exact and the shape only
// grows or thins around its pattern.

namespace latentpde::datagen {

enum class MaskKind { Random, Clustered, Line, Corners, Grid, Boundary, Radial, SinglePatch };

inline constexpr std::array<MaskKind, 4> kTrainMaskKinds{MaskKind::Random, MaskKind::Clustered, MaskKind::Line,
                                                         MaskKind::Corners};
inline constexpr std::array<MaskKind, 4> kEvalMaskKinds{MaskKind::Grid, MaskKind::Boundary, MaskKind::Radial,
                                                        MaskKind::SinglePatch};

inline std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Random: return "random";
    case MaskKind::Clustered: return "clustered";
    case MaskKind::Line: return "line";
    case MaskKind::Corners: return "corners";
    case MaskKind::Grid: return "grid";
    case MaskKind::Boundary: return "boundary";
    case MaskKind::Radial: return "radial";
    case MaskKind::SinglePatch: return "single_patch";
  }
  return "unknown";
}

inline MaskKind mask_kind_from_string(const std::string& s) {
  for (MaskKind k : kTrainMaskKinds)
    if (to_string(k) == s) return k;
  for (MaskKind k : kEvalMaskKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown mask kind '" + s + "'");
}

inline int observed_count(double s, Resolution res) {
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("generate_mask: sparsity must lie in (0, 1]");
  const auto n = static_cast<long long>(std::floor(s * static_cast<double>(res.cells())));
  return static_cast<int>(std::max<long long>(1, n));
}

namespace detail {

inline double torus_dist(double di, double dj, Resolution res) {
  di = std::abs(di);
  dj = std::abs(dj);
  di = std::min(di, res.height - di);
  dj = std::min(dj, res.width - dj);
  return std::hypot(di, dj);
}

inline double segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - ax - t * vx, py - ay - t * vy);
}

}  // namespace detail

inline Mask generate_mask(MaskKind kind, double s, Resolution res, Rng& rng) {
  require_valid(res, "generate_mask");
  const int n_obs = observed_count(s, res);
  const int H = res.height, W = res.width;
  std::vector<double> score(res.cells());
  // Jitter breaks ties randomly; `rough` roughens shape edges.
  auto jitter = [&](double rough) { return rough * uniform(rng) + 1e-9 * uniform(rng); };

  switch (kind) {
    case MaskKind::Random:
      for (auto& v : score) v = uniform(rng);
      break;
    case MaskKind::Clustered: {
      const int seeds = uniform_int(rng, 1, 4);
      std::vector<std::array<double, 3>> c(seeds);
      for (auto& s3 : c) s3 = {uniform(rng, 0, H), uniform(rng, 0, W), uniform(rng, 0.5, 1.5)};
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double best = 1e300;
          for (const auto& [ci, cj, scale] : c) best = std::min(best, detail::torus_dist(i - ci, j - cj, res) / scale);
          score[i * W + j] = best + jitter(1.0);
        }
      break;
    }
    case MaskKind::Line: {
      const int lines = uniform_int(rng, 1, 3);
      std::vector<std::array<double, 4>> seg(lines);
      for (auto& sg : seg) sg = {uniform(rng, 0, H), uniform(rng, 0, W), uniform(rng, 0, H), uniform(rng, 0, W)};
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double best = 1e300;
          for (const auto& [ai, aj, bi, bj] : seg) best = std::min(best, detail::segment_dist(i, j, ai, aj, bi, bj));
          score[i * W + j] = best + jitter(0.05);
        }
      break;
    }
    case MaskKind::Corners:
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double di = std::min(i, H - 1 - i), dj = std::min(j, W - 1 - j);
          score[i * W + j] = std::max(di, dj) + jitter(0.5);
        }
      break;
    case MaskKind::Grid: {
      const int stride = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(res.cells()) / n_obs))));
      const int oi = uniform_int(rng, 0, stride - 1), oj = uniform_int(rng, 0, stride - 1);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const bool on = (i - oi) % stride == 0 && (j - oj) % stride == 0 && i >= oi && j >= oj;
          score[i * W + j] = (on ? 0.0 : 1.0) + jitter(0.5);
        }
      break;
    }
    case MaskKind::Boundary:
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) score[i * W + j] = std::min({i, H - 1 - i, j, W - 1 - j}) + jitter(0.5);
      break;
    case MaskKind::Radial: {
      const double ci = uniform(rng, 0, H), cj = uniform(rng, 0, W);
      const double radius = uniform(rng, 0.2, 0.4) * std::min(H, W);
      const int rays = uniform_int(rng, 3, 6);
      const double phase = uniform(rng, 0, 2 * std::numbers::pi);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double di = i - ci, dj = j - cj;
          di -= H * std::round(di / H);
          dj -= W * std::round(dj / W);
          const double r = std::hypot(di, dj);
          double ang = std::atan2(di, dj) - phase;
          const double sector = 2 * std::numbers::pi / rays;
          ang = std::remainder(ang, sector);
          const double ray = r * std::abs(std::sin(ang));
          score[i * W + j] = std::min(std::abs(r - radius), ray + 0.5) + jitter(0.05);
        }
      break;
    }
    case MaskKind::SinglePatch: {
      const double ci = uniform(rng, 0, H), cj = uniform(rng, 0, W);
      const double aspect = uniform(rng, 0.5, 2.0);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double di = std::abs(i - ci), dj = std::abs(j - cj);
          di = std::min(di, H - di);
          dj = std::min(dj, W - dj);
          score[i * W + j] = std::max(di * aspect, dj / aspect) + jitter(0.01);
        }
      break;
    }
  }

  std::vector<int> order(res.cells());
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + (n_obs - 1), order.end(),
                   [&](int a, int b) { return score[a] < score[b] || (score[a] == score[b] && a < b); });
  Mask m(res);
  for (int k = 0; k < n_obs; ++k) m[order[k]] = 1.0;
  return m;
}

}  // namespace latentpde::datagen
