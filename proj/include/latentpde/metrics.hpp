#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "latentpde/fft.hpp"
#include "latentpde/field.hpp"

namespace latentpde::metrics {

inline constexpr double kPsdFloor = 1e-12;

inline double rmse(const Field& pred, const Field& truth) {
  require_same_grid(pred.resolution(), truth.resolution(), "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double mae(const Field& pred, const Field& truth) {
  require_same_grid(pred.resolution(), truth.resolution(), "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

struct RadialPsd {
  std::vector<double> power;  // index k - 1 for k = 1..K_max
  std::vector<int> counts;
};

/// |FFT(u - mean)|^2 / (HW) on every frequency bin.
inline Field periodogram(const Field& u) {
  const double m = mean(u);
  Field c = u;
  for (auto& v : c.storage()) v -= m;
  const ComplexField spec = fft::forward(c);
  Field out(u.resolution());
  const double inv = 1.0 / static_cast<double>(u.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out[i] = std::norm(spec[i]) * inv;
  return out;
}

/// Annulus averages over k - 1/2 <= |xi| < k + 1/2 with signed integer frequencies, k = 1..floor(min(H, W)/2).
inline RadialPsd radial_psd(const Field& u) {
  const int H = u.height(), W = u.width();
  if (H < 4 || W < 4) throw std::invalid_argument("radial_psd: need at least 4x4, got " + to_string(u.resolution()));
  const int kmax = std::min(H, W) / 2;
  const Field p = periodogram(u);
  RadialPsd out{std::vector<double>(static_cast<std::size_t>(kmax), 0.0), std::vector<int>(static_cast<std::size_t>(kmax), 0)};
  for (int a = 0; a < H; ++a)
    for (int b = 0; b < W; ++b) {
      const double fy = fft_frequency(a, H), fx = fft_frequency(b, W);
      const int k = static_cast<int>(std::floor(std::sqrt(fx * fx + fy * fy) + 0.5));
      if (k < 1 || k > kmax) continue;
      out.power[k - 1] += p(a, b);
      ++out.counts[k - 1];
    }
  for (std::size_t k = 0; k < out.power.size(); ++k)
    if (out.counts[k] > 0) out.power[k] /= out.counts[k];
  return out;
}

inline double psd_log_err(const Field& pred, const Field& truth, double floor = kPsdFloor) {
  require_same_grid(pred.resolution(), truth.resolution(), "psd_log_err");
  const auto a = radial_psd(pred), b = radial_psd(truth);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.power.size(); ++k) {
    const double d = std::log10(std::max(a.power[k], floor)) - std::log10(std::max(b.power[k], floor));
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.power.size()));
}

/// Pointwise fair empirical CRPS averaged over the grid.
inline double crps(const std::vector<Field>& members, const Field& truth) {
  const std::size_t S = members.size();
  if (S < 2) throw std::invalid_argument("crps: need at least 2 members, got " + std::to_string(S));
  for (const auto& m : members) require_same_grid(m.resolution(), truth.resolution(), "crps");
  const double s = static_cast<double>(S);
  double total = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    double skill = 0.0, spread = 0.0;
    for (std::size_t a = 0; a < S; ++a) {
      skill += std::abs(members[a][j] - truth[j]);
      for (std::size_t b = 0; b < S; ++b)
        if (a != b) spread += std::abs(members[a][j] - members[b][j]);
    }
    total += skill / s - spread / (2.0 * s * (s - 1.0));
  }
  return total / static_cast<double>(truth.size());
}

}  // namespace latentpde::metrics
