#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "latentpde/da.hpp"
#include "latentpde/dataset.hpp"

using namespace latentpde;
using da::EnkfConfig;
using da::VarConfig;

namespace {

Field random_field(Resolution r, Rng& rng) {
  Field f(r);
  for (auto& v : f.storage()) v = standard_normal(rng);
  return f;
}

Mask random_mask(Resolution r, double frac, Rng& rng) {
  Mask m(r);
  for (auto& v : m.storage()) v = uniform(rng) < frac ? 1.0 : 0.0;
  return m;
}

double masked_misfit(const Field& x, const Field& y, const Mask& m, int pool) {
  const Field d = hadamard(m, avg_pool(x, pool) - y);
  return dot(d, d) / std::max(mask_count(m), 1.0);
}

// Dense reference: Neumann Laplacian from explicit neighbour lists, H from block averages.
Eigen::MatrixXd dense_laplacian(int H, int W) {
  const int n = H * W;
  Eigen::MatrixXd Lap = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const int c = i * W + j;
      if (i > 0) { Lap(c, c - W) += H * H; Lap(c, c) -= H * H; }
      if (i + 1 < H) { Lap(c, c + W) += H * H; Lap(c, c) -= H * H; }
      if (j > 0) { Lap(c, c - 1) += W * W; Lap(c, c) -= W * W; }
      if (j + 1 < W) { Lap(c, c + 1) += W * W; Lap(c, c) -= W * W; }
    }
  return Lap;
}

Eigen::MatrixXd dense_obs(const Mask& m, int p) {
  const int h = m.height(), w = m.width(), W = w * p;
  Eigen::MatrixXd Hm = Eigen::MatrixXd::Zero(h * w, h * w * p * p);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) Hm(i * w + j, (i * p + a) * W + j * p + b) = m(i, j) / (p * p);
  return Hm;
}

}  // namespace

TEST(BackgroundPrecision, ConstantsPowerAndSymmetry) {
  VarConfig cfg;
  cfg.sigma_b = 0.5;
  Field c(Resolution{8, 6});
  for (auto& v : c.storage()) v = 1.7;
  const Field bc = da::apply_background_precision(c, cfg);
  for (double v : bc.storage()) EXPECT_NEAR(v, 1.7 / 0.25, 1e-9);

  Rng rng = make_rng(1);
  const Field x = random_field({8, 6}, rng);
  cfg.power = 1;
  const Field once = x - cfg.length * cfg.length * da::neumann_laplacian(x);
  const Field b1 = da::apply_background_precision(x, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(b1[i], once[i] / 0.25, 1e-12);

  cfg.power = 2;
  for (int k = 0; k < 5; ++k) {
    const Field u = random_field({8, 6}, rng), v = random_field({8, 6}, rng);
    const double lhs = dot(u, da::apply_background_precision(v, cfg)), rhs = dot(da::apply_background_precision(u, cfg), v);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
  }
}

TEST(ThreeDVar, MatchesDenseNormalEquations) {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    const int p = 2;
    const Field xb = random_field({8, 8}, rng);
    const Mask m = random_mask({4, 4}, 0.5, rng);
    const Field y = hadamard(m, random_field({4, 4}, rng));
    VarConfig cfg;
    cfg.sigma_b = 0.7;
    cfg.length = 0.15;
    cfg.cg_tol = 1e-13;
    const double so = 0.2;
    const auto r = da::threedvar_analyze(y, m, p, so, xb, cfg);
    ASSERT_TRUE(r.converged);

    const int n = 64;
    const Eigen::MatrixXd A1 = Eigen::MatrixXd::Identity(n, n) - cfg.length * cfg.length * dense_laplacian(8, 8);
    const Eigen::MatrixXd Binv = A1 * A1 / (cfg.sigma_b * cfg.sigma_b);
    const Eigen::MatrixXd Hm = dense_obs(m, p);
    const Eigen::MatrixXd A = Binv + Hm.transpose() * Hm / (so * so);
    const Eigen::VectorXd xbv = Eigen::Map<const Eigen::VectorXd>(xb.storage().data(), n);
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.storage().data(), 16);
    const Eigen::VectorXd rhs = Binv * xbv + Hm.transpose() * yv / (so * so);
    const Eigen::VectorXd xa = A.ldlt().solve(rhs);
    const double scale = xa.cwiseAbs().maxCoeff();
    for (int i = 0; i < n; ++i) EXPECT_NEAR(r.analysis[i], xa(i), 1e-8 * scale);
  }
}

TEST(ThreeDVar, LimitsAndOptimality) {
  Rng rng = make_rng(3);
  const Field xb = random_field({16, 16}, rng);
  const Mask m = random_mask({8, 8}, 0.3, rng);
  const Field y = hadamard(m, random_field({8, 8}, rng));
  VarConfig cfg;
  cfg.sigma_b = 1e-4;
  const auto tight = da::threedvar_analyze(y, m, 2, 0.15, xb, cfg);
  EXPECT_LT(l2_norm(tight.analysis - xb) / l2_norm(xb), 1e-3);

  Mask full(Resolution{16, 16});
  for (auto& v : full.storage()) v = 1.0;
  const Field yf = random_field({16, 16}, rng);
  cfg.sigma_b = 1.0;
  const auto obs = da::threedvar_analyze(yf, full, 1, 1e-4, xb, cfg);
  for (std::size_t i = 0; i < yf.size(); ++i) EXPECT_NEAR(obs.analysis[i], yf[i], 1e-3);

  const auto r = da::threedvar_analyze(y, m, 2, 0.15, xb, cfg);
  ASSERT_TRUE(r.converged);
  const double g0 = l2_norm(da::threedvar_gradient(xb, y, m, 2, 0.15, xb, cfg));
  EXPECT_LT(l2_norm(da::threedvar_gradient(r.analysis, y, m, 2, 0.15, xb, cfg)), cfg.cg_tol * (1 + g0));
}

TEST(ThreeDVar, DeskGridConvergesWithinBudget) {
  Rng rng = make_rng(4);
  const Field xb = random_field({32, 32}, rng);
  const Mask m = random_mask({16, 16}, 0.05, rng);
  const Field y = hadamard(m, random_field({16, 16}, rng));
  const auto r = da::threedvar_analyze(y, m, 2, 0.15, xb, VarConfig{});
  EXPECT_TRUE(r.converged) << r.iterations << " iterations, residual " << r.relative_residual;
  EXPECT_LT(masked_misfit(r.analysis, y, m, 2), masked_misfit(xb, y, m, 2));
}

TEST(Enkf, ScalarKalmanOracle) {
  // One cell, p = 1, full mask: prior N(xb, (sigma_e / 2)^2), likelihood N(y, sigma_obs^2).
  Field xb(Resolution{1, 1});
  xb[0] = 0.2;
  Field y(Resolution{1, 1});
  y[0] = 1.4;
  Mask m(Resolution{1, 1});
  m[0] = 1.0;
  EnkfConfig cfg;
  cfg.members = 10000;
  cfg.cycles = 1;
  cfg.sigma_e = 1.0;
  cfg.post_smoothing_passes = 0;
  cfg.correct_observed = false;
  const double P = 0.25, R = 0.3 * 0.3;
  const double exact = xb[0] + P / (P + R) * (y[0] - xb[0]);
  Rng rng = make_rng(5);
  const auto r = da::enkf_analyze(y, m, 1, 0.3, xb, cfg, rng);
  EXPECT_NEAR(r.mean[0], exact, 0.02 * std::abs(exact));
  EXPECT_FALSE(r.regularized);
}

TEST(Enkf, ZeroSpreadAndMeanPreservation) {
  Rng rng = make_rng(6);
  const Field xb = random_field({16, 16}, rng);
  const Mask m = random_mask({8, 8}, 0.2, rng);
  const Field y = hadamard(m, random_field({8, 8}, rng));
  EnkfConfig cfg;
  cfg.sigma_e = 0.0;
  cfg.post_smoothing_passes = 0;
  const auto r = da::enkf_analyze(y, m, 2, 0.15, xb, cfg, rng);
  for (const auto& f : r.ensemble)
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], xb[i]);
  const Field want = xb + upsample_nearest(hadamard(m, y - avg_pool(xb, 2)), 2);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(r.mean[i], want[i], 1e-12);

  Mask none(Resolution{8, 8});
  cfg.sigma_e = 0.25;
  cfg.correct_observed = false;
  const auto e = da::enkf_analyze(y, none, 2, 0.15, xb, cfg, rng);
  for (std::size_t i = 0; i < xb.size(); ++i) EXPECT_NEAR(e.mean[i], e.prior_mean[i], 1e-10);
}

TEST(Enkf, SingularInnovationIsRegularized) {
  Rng rng = make_rng(7);
  const Field xb = random_field({8, 8}, rng);
  Mask m(Resolution{4, 4});
  for (auto& v : m.storage()) v = 1.0;
  EnkfConfig cfg;
  cfg.members = 4;  // 16 observed cells, rank <= 3
  const auto r = da::enkf_analyze(m, m, 2, 0.0, xb, cfg, rng);
  EXPECT_TRUE(r.regularized);
  for (double v : r.mean.storage()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Enkf, AnalysisReducesMaskedResidualOnDeskInstances) {
  datagen::DatasetConfig c;
  c.count = 50;
  c.seed = 31;
  c.sparsity_min = c.sparsity_max = 0.05;
  const auto ds = datagen::build_dataset(c);
  const auto layout = c.layout();
  int improved = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    Rng rng = make_rng(derive_seed(77, i));
    auto z = s.z_raw;
    for (auto& v : z) v += 0.5 * standard_normal(rng);
    const Field xb = decode(z, bilinear_upsample(s.u0_lr, c.pool_factor), c.regime, layout, c.hr);
    const auto r = da::enkf_analyze(s.y, s.mask, c.pool_factor, c.sigma_obs, xb, EnkfConfig{}, rng);
    Field mean(xb.resolution());
    for (const auto& f : r.ensemble) mean = mean + (1.0 / r.ensemble.size()) * f;
    if (masked_misfit(mean, s.y, s.mask, c.pool_factor) <= masked_misfit(r.prior_mean, s.y, s.mask, c.pool_factor)) ++improved;
  }
  EXPECT_GE(improved, 45);
}

TEST(BackgroundPrecision, CovarianceInvertsPrecision) {
  Rng rng = make_rng(8);
  VarConfig cfg;
  cfg.sigma_b = 0.6;
  for (Resolution r : {Resolution{8, 8}, Resolution{12, 20}}) {
    const Field x = random_field(r, rng);
    const da::BackgroundCovariance B(r, cfg);
    const Field back = da::apply_background_precision(B.apply(x), cfg);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
  }
}
