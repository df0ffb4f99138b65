#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "latentpde/field.hpp"
#include "latentpde/random.hpp"

namespace latentpde::da {

struct VarConfig {
  double sigma_b = 1.0;
  double length = 0.1;  // correlation length in domain units
  int power = 2;
  double cg_tol = 1e-8;
  int cg_max_iter = 500;

  void validate() const {
    if (!(sigma_b > 0) || !(length > 0) || power < 1) throw std::invalid_argument("VarConfig: need sigma_b > 0, L > 0, p >= 1");
    if (!(cg_tol > 0) || cg_max_iter < 1) throw std::invalid_argument("VarConfig: bad CG budget");
  }
};

struct EnkfConfig {
  int members = 16;
  int cycles = 2;
  double sigma_e = 0.25;
  int smoothing_passes = 2;
  int post_smoothing_passes = 1;
  bool correct_observed = true;

  void validate() const {
    if (members < 2 || cycles < 1) throw std::invalid_argument("EnkfConfig: need N_e >= 2 and C >= 1");
    if (sigma_e < 0 || smoothing_passes < 0 || post_smoothing_passes < 0) throw std::invalid_argument("EnkfConfig: negative setting");
  }
};

inline nlohmann::json to_json(const VarConfig& c) {
  return {{"sigma_b", c.sigma_b}, {"L", c.length}, {"p", c.power}, {"cg_tol", c.cg_tol}, {"cg_max_iter", c.cg_max_iter}};
}

inline nlohmann::json to_json(const EnkfConfig& c) {
  return {{"members", c.members},
          {"cycles", c.cycles},
          {"sigma_e", c.sigma_e},
          {"smoothing_passes", c.smoothing_passes},
          {"post_smoothing_passes", c.post_smoothing_passes},
          {"correct_observed", c.correct_observed}};
}

/// Five-point Laplacian on the unit square with mesh width 1/N per axis and mirror (Neumann) ghosts.
inline Field neumann_laplacian(const Field& x) {
  const int H = x.height(), W = x.width();
  const double ih2 = static_cast<double>(H) * H, iw2 = static_cast<double>(W) * W;
  Field out(x.resolution());
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double c = x(i, j);
      const double up = x(i > 0 ? i - 1 : i, j), dn = x(i + 1 < H ? i + 1 : i, j);
      const double lf = x(i, j > 0 ? j - 1 : j), rt = x(i, j + 1 < W ? j + 1 : j);
      out(i, j) = (up + dn - 2 * c) * ih2 + (lf + rt - 2 * c) * iw2;
    }
  return out;
}

/// sigma_b^-2 (I - L^2 lap)^p x.
inline Field apply_background_precision(const Field& x, const VarConfig& cfg) {
  cfg.validate();
  Field v = x;
  const double L2 = cfg.length * cfg.length;
  for (int k = 0; k < cfg.power; ++k) v = v - L2 * neumann_laplacian(v);
  return (1.0 / (cfg.sigma_b * cfg.sigma_b)) * v;
}

/// B x = sigma_b^2 (I - L^2 lap)^-p x, exact through the orthonormal cosine eigenbasis of the
/// Neumann Laplacian: phi_k(i) = cos(pi k (i + 1/2) / N), eigenvalue -4 N^2 sin^2(pi k / 2N).
class BackgroundCovariance {
 public:
  BackgroundCovariance(Resolution res, const VarConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    vy_ = basis(res.height, ly_);
    vx_ = basis(res.width, lx_);
  }

  [[nodiscard]] Field apply(const Field& x) const {
    const Eigen::Index H = vy_.rows(), W = vx_.rows();
    if (x.height() != H || x.width() != W) throw std::invalid_argument("BackgroundCovariance: grid mismatch");
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(x.storage().data(), H, W);
    Eigen::MatrixXd C = vy_.transpose() * X * vx_;
    const double L2 = cfg_.length * cfg_.length, s2 = cfg_.sigma_b * cfg_.sigma_b;
    for (Eigen::Index a = 0; a < H; ++a)
      for (Eigen::Index b = 0; b < W; ++b) C(a, b) *= s2 / std::pow(1.0 + L2 * (ly_[a] + lx_[b]), cfg_.power);
    const Eigen::MatrixXd Y = vy_ * C * vx_.transpose();
    Field out(x.resolution());
    for (Eigen::Index i = 0; i < H; ++i)
      for (Eigen::Index j = 0; j < W; ++j) out(static_cast<int>(i), static_cast<int>(j)) = Y(i, j);
    return out;
  }

 private:
  static Eigen::MatrixXd basis(int n, std::vector<double>& lam) {
    Eigen::MatrixXd V(n, n);
    lam.assign(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) {
      const double norm = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int i = 0; i < n; ++i) V(i, k) = norm * std::cos(std::numbers::pi * k * (i + 0.5) / n);
      const double s = std::sin(std::numbers::pi * k / (2.0 * n));
      lam[static_cast<std::size_t>(k)] = 4.0 * n * n * s * s;
    }
    return V;
  }

  VarConfig cfg_;
  Eigen::MatrixXd vy_, vx_;
  std::vector<double> ly_, lx_;
};

/// H(x) = M (AvgPool_p x) and its adjoint.
struct ObservationOperator {
  Mask mask;
  int pool = 1;

  [[nodiscard]] Field apply(const Field& x) const { return hadamard(mask, avg_pool(x, pool)); }
  [[nodiscard]] Field adjoint(const Field& r) const { return avg_pool_adjoint(hadamard(mask, r), pool); }
};

inline void require_consistent(const Field& y, const Mask& mask, const Field& xb, int pool, const char* what) {
  require_same_grid(y.resolution(), mask.resolution(), what);
  if (pool < 1 || xb.height() != y.height() * pool || xb.width() != y.width() * pool)
    throw std::invalid_argument(std::string(what) + ": background " + to_string(xb.resolution()) + " is not " +
                                std::to_string(pool) + "x the observation grid " + to_string(y.resolution()));
}

struct VarResult {
  Field analysis;
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Minimizes 1/2 (x - xb)' B^-1 (x - xb) + 1/(2 sigma_obs^2) |y - H x|^2 by matrix-free CG on
/// (B^-1 + H' H / sigma_obs^2) dx = H'(y - H xb) / sigma_obs^2, starting from xb, preconditioned by B.
inline VarResult threedvar_analyze(const Field& y, const Mask& mask, int pool, double sigma_obs, const Field& xb,
                                   const VarConfig& cfg) {
  cfg.validate();
  require_consistent(y, mask, xb, pool, "threedvar_analyze");
  if (!(sigma_obs > 0)) throw std::invalid_argument("threedvar_analyze: sigma_obs must be positive");
  const ObservationOperator op{mask, pool};
  const double inv_r = 1.0 / (sigma_obs * sigma_obs);
  auto A = [&](const Field& v) { return apply_background_precision(v, cfg) + inv_r * op.adjoint(op.apply(v)); };

  Field dx(xb.resolution());
  Field r = inv_r * op.adjoint(y - op.apply(xb));
  const double bnorm = l2_norm(r);
  VarResult out;
  if (bnorm == 0.0) {
    out.analysis = xb;
    out.converged = true;
    return out;
  }
  const BackgroundCovariance B(xb.resolution(), cfg);
  Field zr = B.apply(r);
  Field p = zr;
  double rz = dot(r, zr);
  for (int it = 1; it <= cfg.cg_max_iter; ++it) {
    const Field Ap = A(p);
    const double alpha = rz / dot(p, Ap);
    dx = dx + alpha * p;
    r = r - alpha * Ap;
    out.iterations = it;
    if (l2_norm(r) <= cfg.cg_tol * bnorm) {
      out.converged = true;
      break;
    }
    zr = B.apply(r);
    const double rz_new = dot(r, zr);
    p = zr + (rz_new / rz) * p;
    rz = rz_new;
  }
  out.relative_residual = l2_norm(r) / bnorm;
  out.analysis = xb + dx;
  return out;
}

/// Gradient of the 3D-Var cost at x.
inline Field threedvar_gradient(const Field& x, const Field& y, const Mask& mask, int pool, double sigma_obs, const Field& xb,
                                const VarConfig& cfg) {
  const ObservationOperator op{mask, pool};
  return apply_background_precision(x - xb, cfg) - (1.0 / (sigma_obs * sigma_obs)) * op.adjoint(y - op.apply(x));
}

/// Periodic 3x3 box average applied `passes` times.
inline Field box_smooth(const Field& x, int passes) {
  Field v = x;
  const int H = x.height(), W = x.width();
  for (int k = 0; k < passes; ++k) {
    Field next(x.resolution());
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int a = -1; a <= 1; ++a)
          for (int b = -1; b <= 1; ++b) acc += v((i + a + H) % H, (j + b + W) % W);
        next(i, j) = acc / 9.0;
      }
    v = std::move(next);
  }
  return v;
}

struct EnkfResult {
  Field mean;
  Field prior_mean;
  std::vector<Field> ensemble;  // analysis members before post-processing
  bool regularized = false;
};

/// Perturbed-observation EnKF on the observed LR cells, followed by post-smoothing of the mean and the
/// direct correction M (y - D_s(mean)) spread over each observed block.
inline EnkfResult enkf_analyze(const Field& y, const Mask& mask, int pool, double sigma_obs, const Field& xb, const EnkfConfig& cfg,
                               Rng& rng) {
  cfg.validate();
  require_consistent(y, mask, xb, pool, "enkf_analyze");
  if (sigma_obs < 0) throw std::invalid_argument("enkf_analyze: sigma_obs must be non-negative");
  const int N = cfg.members;
  const std::size_t n = xb.size();
  const Mask mask_hr = upsample_nearest(mask, pool);

  std::vector<Field> ens;
  ens.reserve(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    Field xi(xb.resolution());
    for (std::size_t i = 0; i < n; ++i) xi[i] = (1.0 - 0.5 * mask_hr[i]) * standard_normal(rng);
    ens.push_back(xb + cfg.sigma_e * box_smooth(xi, cfg.smoothing_passes));
  }
  auto ensemble_mean = [&](const std::vector<Field>& e) {
    Field m(xb.resolution());
    for (const auto& f : e)
      for (std::size_t i = 0; i < n; ++i) m[i] += f[i];
    for (auto& v : m.storage()) v /= static_cast<double>(e.size());
    return m;
  };

  EnkfResult out;
  out.prior_mean = ensemble_mean(ens);
  std::vector<std::size_t> obs;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] > 0.5) obs.push_back(i);
  const int m = static_cast<int>(obs.size());

  if (m > 0) {
    for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
      Eigen::MatrixXd X(N, static_cast<Eigen::Index>(n)), Y(N, m);
      for (int k = 0; k < N; ++k) {
        const Field hx = avg_pool(ens[k], pool);
        for (std::size_t i = 0; i < n; ++i) X(k, static_cast<Eigen::Index>(i)) = ens[k][i];
        for (int o = 0; o < m; ++o) Y(k, o) = hx[obs[o]];
      }
      Eigen::MatrixXd D(m, N);
      for (int k = 0; k < N; ++k)
        for (int o = 0; o < m; ++o) D(o, k) = y[obs[o]] + sigma_obs * standard_normal(rng) - Y(k, o);
      const Eigen::MatrixXd Ax = X.rowwise() - X.colwise().mean();
      const Eigen::MatrixXd Ay = Y.rowwise() - Y.colwise().mean();
      Eigen::MatrixXd C = Ay.transpose() * Ay / (N - 1.0);
      C.diagonal().array() += sigma_obs * sigma_obs;

      Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
      const double scale = std::max(C.diagonal().cwiseAbs().maxCoeff(), 1e-300);
      const auto piv = ldlt.vectorD().cwiseAbs();
      if (ldlt.info() != Eigen::Success || piv.minCoeff() <= 1e-12 * scale) {
        out.regularized = true;
        C.diagonal().array() += 1e-10 * scale + 1e-300;
        ldlt.compute(C);
      }
      const Eigen::MatrixXd W = ldlt.solve(D);
      const Eigen::MatrixXd inc = (Ax.transpose() * (Ay * W)) / (N - 1.0);  // n x N
      for (int k = 0; k < N; ++k)
        for (std::size_t i = 0; i < n; ++i) ens[k][i] += inc(static_cast<Eigen::Index>(i), k);
    }
  }
  out.ensemble = ens;
  out.mean = box_smooth(ensemble_mean(ens), cfg.post_smoothing_passes);
  if (cfg.correct_observed) {
    const Field resid = hadamard(mask, y - avg_pool(out.mean, pool));
    out.mean = out.mean + upsample_nearest(resid, pool);
  }
  return out;
}

}  // namespace latentpde::da
