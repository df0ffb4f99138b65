#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "latentpde/latent.hpp"

using namespace latentpde;
using namespace latentpde::latent;

TEST(Regimes, TableMatchesStudyDefinitions) {
  const auto table = standard_regimes();
  ASSERT_EQ(table.size(), 6u);
  const auto adv = find_regime("advection");
  EXPECT_EQ(adv.family, PdeFamily::AdvectionDiffusion);
  EXPECT_DOUBLE_EQ(adv.bounds[2].lo, 0.001);
  EXPECT_DOUBLE_EQ(adv.bounds[2].hi, 0.08);
  EXPECT_DOUBLE_EQ(adv.forcing_std, 0.30);
  const auto kg = find_regime("klein_gordon");
  EXPECT_EQ(kg.family, PdeFamily::KleinGordon);
  EXPECT_DOUBLE_EQ(kg.bounds[2].hi, 3.5);
  EXPECT_DOUBLE_EQ(find_regime("helmholtz").forcing_std, 0.55);
  EXPECT_DOUBLE_EQ(find_regime("forcing").forcing_std, 1.00);
  EXPECT_THROW(find_regime("nope"), std::invalid_argument);
}

TEST(Regimes, JsonRoundTrip) {
  nlohmann::json j;
  for (const auto& r : standard_regimes()) j["regimes"].push_back(to_json(r));
  const auto back = regimes_from_json(j);
  ASSERT_EQ(back.size(), 6u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].name, standard_regimes()[i].name);
    EXPECT_EQ(back[i].family, standard_regimes()[i].family);
    for (int b = 0; b < 3; ++b) EXPECT_EQ(back[i].bounds[b].lo, standard_regimes()[i].bounds[b].lo);
  }
  auto bad = to_json(standard_regimes()[0]);
  bad["bounds"][1] = {1.0, -1.0};
  EXPECT_THROW(regime_from_json(bad), std::invalid_argument);
}

TEST(ThetaFromRaw, ZeroGivesMidpoints) {
  const std::vector<double> r{0, 0, 0};
  const auto p = theta_from_raw(r, find_regime("diffusion"));
  EXPECT_DOUBLE_EQ(p.theta[0], 0.0);
  EXPECT_DOUBLE_EQ(p.theta[1], 0.0);
  EXPECT_DOUBLE_EQ(p.theta[2], 0.185);
}

TEST(ThetaFromRaw, SaturationAndBounds) {
  const auto reg = find_regime("helmholtz");
  const auto hi = theta_from_raw(std::vector<double>{20, 20, 20}, reg);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(hi.theta[j], reg.bounds[j].hi, 1e-8);
  for (double r : {-700.0, -30.0, -1.0, 0.5, 30.0, 700.0}) {
    const auto p = theta_from_raw(std::vector<double>{r, r, r}, reg);
    for (int j = 0; j < 3; ++j) {
      EXPECT_GE(p.theta[j], reg.bounds[j].lo);
      EXPECT_LE(p.theta[j], reg.bounds[j].hi);
    }
  }
}

TEST(ThetaFromRaw, MonotoneAndInvertible) {
  const auto reg = find_regime("balanced");
  double prev = -1e300;
  for (double r = -8; r <= 8; r += 0.25) {
    const auto p = theta_from_raw(std::vector<double>{r, r, r}, reg);
    EXPECT_GT(p.theta[2], prev);
    prev = p.theta[2];
    const auto back = raw_from_theta(p, reg);
    EXPECT_NEAR(back[0], r, 1e-9);
  }
}

TEST(ThetaFromRaw, JacobianMatchesFiniteDifference) {
  const auto reg = find_regime("klein_gordon");
  const std::vector<double> r{0.3, -1.2, 2.0};
  const auto jac = theta_jacobian(r, reg);
  for (int j = 0; j < 3; ++j) {
    auto rp = r, rm = r;
    rp[j] += 1e-6;
    rm[j] -= 1e-6;
    const double fd = (theta_from_raw(rp, reg).theta[j] - theta_from_raw(rm, reg).theta[j]) / 2e-6;
    EXPECT_NEAR(jac[j], fd, 1e-8);
  }
}

TEST(SampleRegimeLatent, KappaMeanInAdvectionRegime) {
  const auto reg = find_regime("advection");
  const LatentLayout layout{4};
  Rng rng = make_rng(2024);
  const int n = 10000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const auto z = sample_regime_latent(reg, layout, true, rng);
    const double k = theta_from_raw(z.values, reg).theta[2];
    sum += k;
    sum2 += k * k;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - (0.001 + 0.08) / 2), 3 * se);
}

TEST(SampleRegimeLatent, KolmogorovSmirnovUniformity) {
  const auto reg = find_regime("diffusion");
  const LatentLayout layout{4};
  Rng rng = make_rng(7);
  const int n = 5000;
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) {
    const auto z = sample_regime_latent(reg, layout, false, rng);
    u[i] = (theta_from_raw(z.values, reg).theta[0] - reg.bounds[0].lo) / (reg.bounds[0].hi - reg.bounds[0].lo);
  }
  std::sort(u.begin(), u.end());
  double d = 0;
  for (int i = 0; i < n; ++i) d = std::max({d, (i + 1.0) / n - u[i], u[i] - static_cast<double>(i) / n});
  // Asymptotic critical value at alpha = 0.01: 1.6276 / sqrt(n).
  EXPECT_LT(d, 1.6276 / std::sqrt(static_cast<double>(n)));
}

TEST(SampleRegimeLatent, ForcingDisabledIsZeroAndScaledOtherwise) {
  const auto reg = find_regime("forcing");
  const LatentLayout layout{4};
  Rng rng = make_rng(1);
  const auto z0 = sample_regime_latent(reg, layout, false, rng);
  ASSERT_EQ(z0.values.size(), 67u);
  for (double v : z0.forcing()) EXPECT_EQ(v, 0.0);
  double s2 = 0;
  int count = 0;
  for (int i = 0; i < 200; ++i) {
    const auto z = sample_regime_latent(reg, layout, true, rng);
    for (double v : z.forcing()) {
      s2 += v * v;
      ++count;
    }
  }
  EXPECT_NEAR(std::sqrt(s2 / count), reg.forcing_std, 0.03);
}

TEST(LatentLayout, DefaultLength) {
  EXPECT_EQ(LatentLayout{}.size(), 579u);
  EXPECT_EQ(LatentLayout{4}.size(), 67u);
}

TEST(Normalization, IdentityAndRoundTrip) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  std::vector<double> z(67);
  for (auto& v : z) v = 3 * n01(rng);
  const auto id = LatentStats::identity(67);
  EXPECT_EQ(normalize(z, id), z);
  LatentStats s{std::vector<double>(67), std::vector<double>(67), Branch::Encoder};
  for (std::size_t i = 0; i < 67; ++i) {
    s.mu[i] = n01(rng);
    s.sigma[i] = 0.1 + std::abs(n01(rng));
  }
  const auto back = denormalize(normalize(z, s), s);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(back[i], z[i], 1e-12);
}

TEST(Normalization, StatsStandardizeTheirSet) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::vector<std::vector<double>> set(300, std::vector<double>(10));
  for (auto& z : set)
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = 5.0 * i + (1.0 + i) * n01(rng);
  const auto stats = compute_stats(set, Branch::Map);
  std::vector<double> m(10, 0.0), v(10, 0.0);
  for (const auto& z : set) {
    const auto zn = normalize(z, stats);
    for (int i = 0; i < 10; ++i) {
      m[i] += zn[i] / 300;
      v[i] += zn[i] * zn[i] / 300;
    }
  }
  for (int i = 0; i < 10; ++i) {
    EXPECT_NEAR(m[i], 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(v[i] - m[i] * m[i]), 1.0, 1e-6);
  }
}

TEST(Normalization, RejectsBadStats) {
  const std::vector<double> z(5, 1.0);
  LatentStats s = LatentStats::identity(5);
  s.sigma[2] = 0.0;
  EXPECT_THROW(normalize(z, s), std::invalid_argument);
  EXPECT_THROW(normalize(z, LatentStats::identity(4)), std::invalid_argument);
  LatentVector raw{z, false};
  EXPECT_THROW(denormalize(raw, LatentStats::identity(5)), std::invalid_argument);
  const auto j = to_json(LatentStats::identity(5, Branch::Encoder));
  EXPECT_EQ(stats_from_json(j).branch, Branch::Encoder);
}
