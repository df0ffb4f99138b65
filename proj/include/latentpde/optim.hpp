#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace latentpde::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for one parameter block.
struct AdamMoments {
  std::vector<double> m, v;
  long step = 0;

  explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of x in place. `lr` overrides cfg.lr when positive.
inline void adam_step(std::span<double> x, std::span<const double> g, AdamMoments& s, const AdamConfig& cfg,
                      double lr = -1.0) {
  if (x.size() != g.size() || s.m.size() != x.size())
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  if (lr <= 0) lr = cfg.lr;
  ++s.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.m[i] = cfg.beta1 * s.m[i] + (1 - cfg.beta1) * g[i];
    s.v[i] = cfg.beta2 * s.v[i] + (1 - cfg.beta2) * g[i] * g[i];
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    x[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

/// Cosine decay from lr0 at step 0 to lr1 at step (steps - 1).
inline double cosine_lr(double lr0, double lr1, int step, int steps) {
  if (steps <= 1) return lr0;
  const double t = static_cast<double>(step) / (steps - 1);
  return lr1 + 0.5 * (lr0 - lr1) * (1 + std::cos(std::numbers::pi * t));
}

}  // namespace latentpde::optim
