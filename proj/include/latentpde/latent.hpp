#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentpde/random.hpp"
#include "latentpde/spectral.hpp"

namespace latentpde::latent {

using spectral::PdeFamily;
using spectral::PhysicalParams;

/// Evolution horizon used when a regime does not set one.
inline constexpr double kDefaultHorizon = 0.01;

/// Raw latent layout: [r1, r2, r3, q] with q holding 4 * M_f^2 forcing coefficients.
struct LatentLayout {
  int forcing_modes = 12;

  [[nodiscard]] constexpr std::size_t forcing_size() const noexcept {
    return 4u * static_cast<std::size_t>(forcing_modes) * static_cast<std::size_t>(forcing_modes);
  }
  [[nodiscard]] constexpr std::size_t size() const noexcept { return 3 + forcing_size(); }
  friend constexpr bool operator==(const LatentLayout&, const LatentLayout&) = default;
};

struct LatentVector {
  std::vector<double> values;
  bool normalized = false;

  [[nodiscard]] std::span<const double> coefficients() const { return std::span(values).first(3); }
  [[nodiscard]] std::span<const double> forcing() const { return std::span(values).subspan(3); }
};

inline void require_layout(std::span<const double> z, const LatentLayout& layout, const char* what) {
  if (z.size() != layout.size()) {
    throw std::invalid_argument(std::string(what) + ": latent length " + std::to_string(z.size()) +
                                " does not match layout length " + std::to_string(layout.size()));
  }
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct RegimeSpec {
  std::string name;
  PdeFamily family = PdeFamily::AdvectionDiffusion;
  std::array<Interval, 3> bounds{};
  double forcing_std = 0.0;
  double horizon = kDefaultHorizon;

  void validate() const {
    for (std::size_t j = 0; j < 3; ++j) {
      if (!(bounds[j].lo < bounds[j].hi)) {
        throw std::invalid_argument("regime '" + name + "': empty interval for coefficient " + std::to_string(j + 1));
      }
    }
    if (forcing_std < 0.0) throw std::invalid_argument("regime '" + name + "': negative forcing std");
    if (!(horizon > 0.0)) throw std::invalid_argument("regime '" + name + "': horizon must be positive");
    if (family == PdeFamily::AdvectionDiffusion && bounds[2].lo <= 0.0)
      throw std::invalid_argument("regime '" + name + "': diffusivity must be positive");
    if (family == PdeFamily::Helmholtz) {
      for (const auto& b : bounds)
        if (b.lo <= 0.0) throw std::invalid_argument("regime '" + name + "': Helmholtz coefficients must be positive");
    }
  }
};

/// The six study regimes: four advection-diffusion subregimes, Klein-Gordon and Helmholtz.
inline std::vector<RegimeSpec> standard_regimes() {
  using F = PdeFamily;
  return {
      {"diffusion", F::AdvectionDiffusion, {{{-1.0, 1.0}, {-1.0, 1.0}, {0.02, 0.35}}}, 0.30, kDefaultHorizon},
      {"advection", F::AdvectionDiffusion, {{{-3.0, 3.0}, {-3.0, 3.0}, {0.001, 0.08}}}, 0.30, kDefaultHorizon},
      {"balanced", F::AdvectionDiffusion, {{{-2.0, 2.0}, {-2.0, 2.0}, {0.01, 0.20}}}, 0.40, kDefaultHorizon},
      {"forcing", F::AdvectionDiffusion, {{{-1.5, 1.5}, {-1.5, 1.5}, {0.01, 0.20}}}, 1.00, kDefaultHorizon},
      {"klein_gordon", F::KleinGordon, {{{0.4, 2.8}, {0.4, 2.8}, {0.3, 3.5}}}, 0.45, 0.1},
      {"helmholtz", F::Helmholtz, {{{0.03, 0.55}, {0.03, 0.55}, {0.4, 3.5}}}, 0.55, kDefaultHorizon},
  };
}

inline nlohmann::json to_json(const RegimeSpec& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["family"] = spectral::to_string(r.family);
  j["bounds"] = nlohmann::json::array();
  for (const auto& b : r.bounds) j["bounds"].push_back({b.lo, b.hi});
  j["forcing_std"] = r.forcing_std;
  j["horizon"] = r.horizon;
  return j;
}

inline RegimeSpec regime_from_json(const nlohmann::json& j) {
  RegimeSpec r;
  r.name = j.at("name").get<std::string>();
  r.family = spectral::family_from_string(j.at("family").get<std::string>());
  const auto& b = j.at("bounds");
  if (!b.is_array() || b.size() != 3) throw std::invalid_argument("regime '" + r.name + "': expected three bounds");
  for (std::size_t i = 0; i < 3; ++i) r.bounds[i] = {b[i].at(0).get<double>(), b[i].at(1).get<double>()};
  r.forcing_std = j.at("forcing_std").get<double>();
  r.horizon = j.value("horizon", kDefaultHorizon);
  r.validate();
  return r;
}

/// Reads a regime table: `{"regimes": [ {...}, ... ]}`.
inline std::vector<RegimeSpec> regimes_from_json(const nlohmann::json& j) {
  std::vector<RegimeSpec> out;
  for (const auto& item : j.at("regimes")) out.push_back(regime_from_json(item));
  return out;
}

inline RegimeSpec find_regime(const std::vector<RegimeSpec>& table, const std::string& name) {
  for (const auto& r : table)
    if (r.name == name) return r;
  throw std::invalid_argument("unknown regime '" + name + "'");
}

inline RegimeSpec find_regime(const std::string& name) { return find_regime(standard_regimes(), name); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// theta_j = a_j + (b_j - a_j) sigmoid(r_j).
inline PhysicalParams theta_from_raw(std::span<const double> r, const RegimeSpec& regime) {
  if (r.size() < 3) throw std::invalid_argument("theta_from_raw: need three coefficient coordinates");
  PhysicalParams p;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto [a, b] = regime.bounds[j];
    p.theta[j] = a + (b - a) * sigmoid(r[j]);
  }
  p.horizon = regime.horizon;
  return p;
}

/// d theta_j / d r_j.
inline std::array<double, 3> theta_jacobian(std::span<const double> r, const RegimeSpec& regime) {
  std::array<double, 3> d{};
  for (std::size_t j = 0; j < 3; ++j) {
    const double s = sigmoid(r[j]);
    d[j] = (regime.bounds[j].hi - regime.bounds[j].lo) * s * (1.0 - s);
  }
  return d;
}

/// Inverse of theta_from_raw for theta strictly inside its interval.
inline std::array<double, 3> raw_from_theta(const PhysicalParams& p, const RegimeSpec& regime) {
  std::array<double, 3> r{};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto [a, b] = regime.bounds[j];
    r[j] = logit((p.theta[j] - a) / (b - a));
  }
  return r;
}

/// Draws a raw latent whose decoded coefficients are uniform on the regime intervals.
inline LatentVector sample_regime_latent(const RegimeSpec& regime, const LatentLayout& layout, bool forcing_enabled,
                                         Rng& rng) {
  LatentVector z;
  z.values.assign(layout.size(), 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    double xi = 0.0;
    do {
      xi = uniform(rng);
    } while (xi <= 0.0 || xi >= 1.0);
    z.values[j] = logit(xi);
  }
  if (forcing_enabled) {
    for (std::size_t i = 3; i < layout.size(); ++i) z.values[i] = regime.forcing_std * standard_normal(rng);
  }
  return z;
}

enum class Branch { Map, Encoder };

inline std::string to_string(Branch b) { return b == Branch::Map ? "map" : "encoder"; }

inline Branch branch_from_string(const std::string& s) {
  if (s == "map") return Branch::Map;
  if (s == "encoder") return Branch::Encoder;
  throw std::invalid_argument("unknown branch '" + s + "' (expected map or encoder)");
}

/// Coordinate-wise normalization statistics for one branch.
struct LatentStats {
  std::vector<double> mu;
  std::vector<double> sigma;
  Branch branch = Branch::Map;

  void validate(std::size_t dim) const {
    if (mu.size() != dim || sigma.size() != dim) {
      throw std::invalid_argument("LatentStats: dimension " + std::to_string(mu.size()) + " does not match latent length " +
                                  std::to_string(dim));
    }
    for (double s : sigma)
      if (!(s > 0.0)) throw std::invalid_argument("LatentStats: sigma entries must be positive");
  }

  static LatentStats identity(std::size_t dim, Branch b = Branch::Map) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0), b};
  }
};

/// Per-coordinate mean and population std. Coordinates with zero spread get sigma = 1.
inline LatentStats compute_stats(const std::vector<std::vector<double>>& latents, Branch branch) {
  if (latents.empty()) throw std::invalid_argument("compute_stats: empty latent set");
  const std::size_t d = latents.front().size();
  LatentStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), branch};
  for (const auto& z : latents) {
    if (z.size() != d) throw std::invalid_argument("compute_stats: inconsistent latent lengths");
    for (std::size_t i = 0; i < d; ++i) s.mu[i] += z[i];
  }
  for (auto& m : s.mu) m /= static_cast<double>(latents.size());
  for (const auto& z : latents)
    for (std::size_t i = 0; i < d; ++i) s.sigma[i] += (z[i] - s.mu[i]) * (z[i] - s.mu[i]);
  for (auto& v : s.sigma) {
    v = std::sqrt(v / static_cast<double>(latents.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

inline std::vector<double> normalize(std::span<const double> z_raw, const LatentStats& stats) {
  stats.validate(z_raw.size());
  std::vector<double> out(z_raw.size());
  for (std::size_t i = 0; i < z_raw.size(); ++i) out[i] = (z_raw[i] - stats.mu[i]) / stats.sigma[i];
  return out;
}

inline std::vector<double> denormalize(std::span<const double> z, const LatentStats& stats) {
  stats.validate(z.size());
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = stats.mu[i] + stats.sigma[i] * z[i];
  return out;
}

inline LatentVector normalize(const LatentVector& z, const LatentStats& stats) {
  if (z.normalized) throw std::invalid_argument("normalize: latent is already normalized");
  return {normalize(z.values, stats), true};
}

inline LatentVector denormalize(const LatentVector& z, const LatentStats& stats) {
  if (!z.normalized) throw std::invalid_argument("denormalize: latent is already raw");
  return {denormalize(z.values, stats), false};
}

inline nlohmann::json to_json(const LatentStats& s) {
  return {{"mu", s.mu}, {"sigma", s.sigma}, {"branch", to_string(s.branch)}};
}

inline LatentStats stats_from_json(const nlohmann::json& j) {
  LatentStats s;
  s.mu = j.at("mu").get<std::vector<double>>();
  s.sigma = j.at("sigma").get<std::vector<double>>();
  s.branch = branch_from_string(j.at("branch").get<std::string>());
  s.validate(s.mu.size());
  return s;
}

}  // namespace latentpde::latent
