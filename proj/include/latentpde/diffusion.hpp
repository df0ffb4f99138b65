#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "latentpde/dataset.hpp"
#include "latentpde/nn/checkpoint.hpp"
#include "latentpde/nn/networks.hpp"
#include "latentpde/nn/residual_op.hpp"
#include "latentpde/optim.hpp"
#include "latentpde/parallel.hpp"

namespace latentpde::diffusion {

/// Linear variance schedule; index t runs 1..T, alpha_bar[0] = 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta, alpha, alpha_bar;

  static NoiseSchedule linear(int T = 400, double beta_1 = 2.5e-4, double beta_T = 0.05) {
    if (T < 2) throw std::invalid_argument("NoiseSchedule: need T >= 2");
    if (!(0 < beta_1 && beta_1 < beta_T && beta_T < 1)) throw std::invalid_argument("NoiseSchedule: need 0 < beta_1 < beta_T < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<std::size_t>(T) + 1, 1.0);
    s.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
      s.beta[t] = beta_1 + (beta_T - beta_1) * (t - 1) / (T - 1);
      s.alpha[t] = 1.0 - s.beta[t];
      s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
  }

  void require_step(int t, const char* what) const {
    if (t < 1 || t > T) throw std::out_of_range(std::string(what) + ": timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }

  /// Largest t with sqrt(1 - alpha_bar_t) <= sigma (0 when even t = 1 is too noisy).
  [[nodiscard]] int start_step(double sigma) const {
    int best = 0;
    for (int t = 1; t <= T; ++t)
      if (std::sqrt(1.0 - alpha_bar[t]) <= sigma) best = t;
    return best;
  }
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
inline std::vector<double> forward_noise(std::span<const double> z0, int t, const NoiseSchedule& s, Rng& rng) {
  s.require_step(t, "forward_noise");
  const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * standard_normal(rng);
  return out;
}

struct DiffusionTrainConfig {
  int epochs = 60;
  int batch = 16;
  double lr = 1e-3;
  double lambda_obs = 8.0;
  double p_uncond = 0.1;
  double grad_clip = 10.0;
  int T = 400;
  double beta_1 = 2.5e-4;
  double beta_T = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0 || batch < 1) throw std::invalid_argument("DiffusionTrainConfig: need epochs >= 0 and batch >= 1");
    if (!(lr > 0) || lambda_obs < 0 || p_uncond < 0 || p_uncond > 1)
      throw std::invalid_argument("DiffusionTrainConfig: bad lr, lambda_obs or p_uncond");
  }
};

inline nlohmann::json to_json(const DiffusionTrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch", c.batch},   {"lr", c.lr},         {"lambda_obs", c.lambda_obs}, {"p_uncond", c.p_uncond},
          {"grad_clip", c.grad_clip}, {"T", c.T}, {"beta_1", c.beta_1}, {"beta_T", c.beta_T},       {"seed", c.seed}};
}

inline DiffusionTrainConfig diffusion_config_from_json(const nlohmann::json& j) {
  DiffusionTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.lambda_obs = j.value("lambda_obs", c.lambda_obs);
  c.p_uncond = j.value("p_uncond", c.p_uncond);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.T = j.value("T", c.T);
  c.beta_1 = j.value("beta_1", c.beta_1);
  c.beta_T = j.value("beta_T", c.beta_T);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

struct DiffusionModel {
  nn::Denoiser net;
  NoiseSchedule schedule;
  latent::LatentStats stats;  // branch-specific normalization of the training latents
  latent::RegimeSpec regime;
  latent::LatentLayout layout;
  std::vector<double> epoch_loss;
};

/// Per-term value of the training loss on one batch; the optimizer minimizes denoise + lambda_obs * obs.
struct LossTerms {
  nn::Tensor denoise, obs, total;
};

/// Builds the loss for normalized clean latents z0 [B, D] at timesteps t (1..T) with noise eps.
inline LossTerms diffusion_loss(const DiffusionModel& m, const nn::ObsBatch& batch, const std::vector<const MaskedResidual*>& problems,
                                const nn::Tensor& z0, const std::vector<int>& t, const nn::Tensor& eps,
                                const std::vector<bool>& keep, double lambda_obs) {
  const int B = z0.dim(0);
  std::vector<double> sa(static_cast<std::size_t>(B)), sb(sa.size()), tf(sa.size()), ab(sa.size()), inv(sa.size()), c(sa.size());
  for (int b = 0; b < B; ++b) {
    m.schedule.require_step(t[b], "diffusion_loss");
    ab[b] = m.schedule.alpha_bar[t[b]];
    sa[b] = std::sqrt(ab[b]);
    sb[b] = std::sqrt(1.0 - ab[b]);
    tf[b] = static_cast<double>(t[b]) / m.schedule.T;
    inv[b] = 1.0 / sa[b];
    c[b] = -sb[b] / sa[b];
  }
  const nn::Tensor z_t = nn::Tensor::constant(z0.shape(), nn::add(nn::scale_rows(z0, sa), nn::scale_rows(eps, sb)).value());
  const nn::Tensor eps_hat = m.net(z_t, m.net.embed(batch), tf, keep);
  LossTerms out;
  out.denoise = nn::mse(eps_hat, eps);
  if (lambda_obs > 0) {
    const nn::Tensor z0_hat = nn::add(nn::scale_rows(z_t, inv), nn::scale_rows(eps_hat, c));
    out.obs = nn::mean(nn::scale_rows(nn::masked_residual(z0_hat, problems, m.stats), ab));
    out.total = nn::add(out.denoise, nn::scale(out.obs, lambda_obs));
  } else {
    out.obs = nn::Tensor::zeros({1});
    out.total = out.denoise;
  }
  return out;
}

/// Trains a denoiser on raw branch latents (one per dataset sample) with the observation-consistency
/// term and conditioning dropout.
inline DiffusionModel train_denoiser(const std::vector<std::vector<double>>& latents, const datagen::Dataset& ds,
                                     latent::Branch branch, const DiffusionTrainConfig& cfg, const nn::NetConfig& net_cfg) {
  cfg.validate();
  if (latents.size() != ds.samples.size() || latents.empty())
    throw std::invalid_argument("train_denoiser: need one latent per dataset sample");
  const auto layout = ds.config.layout();
  DiffusionModel m{nn::Denoiser(net_cfg, cfg.seed), NoiseSchedule::linear(cfg.T, cfg.beta_1, cfg.beta_T),
                   latent::compute_stats(latents, branch), ds.config.regime, layout, {}};
  if (net_cfg.latent_dim != static_cast<int>(layout.size()))
    throw std::invalid_argument("train_denoiser: network latent_dim does not match the dataset latent length");
  std::vector<std::vector<double>> z0n;
  for (const auto& z : latents) z0n.push_back(latent::normalize(z, m.stats));
  std::vector<MaskedResidual> problems;
  std::vector<datagen::ObservationBundle> bundles;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    problems.emplace_back(ds.config.regime, layout, s.u0_lr, s.y, s.mask);
    bundles.push_back(ds.bundle(i));
  }

  nn::Adam opt(m.net.params(), {cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng = make_rng(derive_seed(cfg.seed, "diffusion-train"));
  const std::size_t d = layout.size();
  std::vector<std::size_t> order(latents.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const int B = static_cast<int>(end - start);
      std::vector<const datagen::ObservationBundle*> bb;
      std::vector<const MaskedResidual*> pp;
      std::vector<double> z0v, ev;
      std::vector<int> t;
      std::vector<bool> keep;
      for (std::size_t k = start; k < end; ++k) {
        bb.push_back(&bundles[order[k]]);
        pp.push_back(&problems[order[k]]);
        z0v.insert(z0v.end(), z0n[order[k]].begin(), z0n[order[k]].end());
        t.push_back(uniform_int(rng, 1, m.schedule.T));
        keep.push_back(uniform(rng) >= cfg.p_uncond);
        for (std::size_t i = 0; i < d; ++i) ev.push_back(standard_normal(rng));
      }
      const auto z0 = nn::Tensor::constant({B, static_cast<int>(d)}, std::move(z0v));
      const auto eps = nn::Tensor::constant({B, static_cast<int>(d)}, std::move(ev));
      const auto loss = diffusion_loss(m, nn::make_obs_batch(bb), pp, z0, t, eps, keep, cfg.lambda_obs);
      if (!std::isfinite(loss.total.item())) {
        std::ostringstream msg;
        msg << "train_denoiser: non-finite loss at epoch " << epoch << ", batch starting " << start
            << " (denoise " << loss.denoise.item() << ", obs " << loss.obs.item() << ")";
        throw std::runtime_error(msg.str());
      }
      m.net.params().zero_grad();
      loss.total.backward();
      nn::clip_grad_norm(m.net.params(), cfg.grad_clip);
      opt.step();
      total += loss.total.item() * B;
    }
    m.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return m;
}

inline void save_model(const DiffusionModel& m, const std::filesystem::path& path, const DiffusionTrainConfig& cfg) {
  nlohmann::json h;
  h["kind"] = "denoiser";
  h["branch"] = latent::to_string(m.stats.branch);
  h["net"] = nn::to_json(m.net.config());
  h["stats"] = latent::to_json(m.stats);
  h["regime"] = latent::to_json(m.regime);
  h["forcing_modes"] = m.layout.forcing_modes;
  h["train"] = to_json(cfg);
  h["seed"] = cfg.seed;
  h["step"] = cfg.epochs;
  h["epoch_loss"] = m.epoch_loss;
  nn::save_checkpoint(path, h, m.net.params());
}

inline DiffusionModel load_model(const std::filesystem::path& path) {
  const auto c = nn::read_checkpoint(path);
  if (c.header.value("kind", "") != "denoiser") throw std::runtime_error(path.string() + ": not a denoiser checkpoint");
  const auto cfg = diffusion_config_from_json(c.header.at("train"));
  DiffusionModel m{nn::Denoiser(nn::net_config_from_json(c.header.at("net"))),
                   NoiseSchedule::linear(cfg.T, cfg.beta_1, cfg.beta_T),
                   latent::stats_from_json(c.header.at("stats")),
                   latent::regime_from_json(c.header.at("regime")),
                   {c.header.at("forcing_modes").get<int>()},
                   c.header.value("epoch_loss", std::vector<double>{})};
  if (latent::to_string(m.stats.branch) != c.header.at("branch").get<std::string>())
    throw std::runtime_error(path.string() + ": branch tag disagrees with the stored normalization statistics");
  if (m.stats.mu.size() != m.layout.size()) throw std::runtime_error(path.string() + ": statistics do not match the latent layout");
  nn::load_parameters(c, m.net.params(), path.string());
  return m;
}

// ---- sampling -----------------------------------------------------------------------------------

struct SamplerConfig {
  double sigma_init_min = 0.3;
  double sigma_init_max = 0.6;
  double window = 0.8;  // guidance for t < window * T
  double eta_g = 0.10;
  double gamma_g = 80.0;
  int inner_steps = 3;
  double clip = 5.0;
  bool guidance = true;
  int refine_steps = 20;
  double lambda_ref = 0.01;  // 0 disables refinement
  double refine_lr = 0.05;
  double noise_scale = 1.0;  // multiplies the reverse-step noise; 0 makes the chain deterministic
  int members = 12;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma_init_min >= 0 && sigma_init_min <= sigma_init_max)) throw std::invalid_argument("SamplerConfig: bad sigma_init range");
    if (!(window > 0 && window <= 1)) throw std::invalid_argument("SamplerConfig: window fraction must lie in (0, 1]");
    if (eta_g < 0 || gamma_g < 0 || inner_steps < 0 || clip < 0) throw std::invalid_argument("SamplerConfig: negative guidance setting");
    if (refine_steps < 0 || lambda_ref < 0 || refine_lr <= 0) throw std::invalid_argument("SamplerConfig: bad refinement setting");
    if (members < 1) throw std::invalid_argument("SamplerConfig: need at least one ensemble member");
  }
};

inline nlohmann::json to_json(const SamplerConfig& c) {
  return {{"sigma_init", {c.sigma_init_min, c.sigma_init_max}},
          {"window", c.window},
          {"eta_g", c.eta_g},
          {"gamma_g", c.gamma_g},
          {"inner_steps", c.inner_steps},
          {"clip", c.clip},
          {"guidance", c.guidance},
          {"refine_steps", c.refine_steps},
          {"lambda_ref", c.lambda_ref},
          {"refine_lr", c.refine_lr},
          {"noise_scale", c.noise_scale},
          {"members", c.members},
          {"seed", c.seed}};
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  SamplerConfig c;
  if (j.contains("sigma_init")) {
    c.sigma_init_min = j.at("sigma_init").at(0).get<double>();
    c.sigma_init_max = j.at("sigma_init").at(1).get<double>();
  }
  c.window = j.value("window", c.window);
  c.eta_g = j.value("eta_g", c.eta_g);
  c.gamma_g = j.value("gamma_g", c.gamma_g);
  c.inner_steps = j.value("inner_steps", c.inner_steps);
  c.clip = j.value("clip", c.clip);
  c.guidance = j.value("guidance", c.guidance);
  c.refine_steps = j.value("refine_steps", c.refine_steps);
  c.lambda_ref = j.value("lambda_ref", c.lambda_ref);
  c.refine_lr = j.value("refine_lr", c.refine_lr);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.members = j.value("members", c.members);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

/// Conditioning for one observation bundle, computed once per instance.
struct Conditioning {
  const MaskedResidual* problem = nullptr;
  nn::Tensor embedding;  // [1, embed_dim]
};

inline Conditioning condition_on(const DiffusionModel& m, const datagen::ObservationBundle& bundle, const MaskedResidual& problem) {
  if (problem.dim() != m.layout.size())
    throw std::invalid_argument("condition_on: problem latent length does not match the model");
  const nn::Tensor e = m.net.embed(nn::make_obs_batch({&bundle}));
  return {&problem, nn::Tensor::constant(e.shape(), e.value())};
}

/// dJ/dz in normalized coordinates.
inline double normalized_gradient(const MaskedResidual& problem, const latent::LatentStats& stats, std::span<const double> z,
                                  std::vector<double>& g) {
  const auto raw = latent::denormalize(z, stats);
  g.assign(z.size(), 0.0);
  const double J = problem.value_and_gradient(raw, g);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= stats.sigma[i];
  return J;
}

struct SampleTrace {
  int start_step = 0;
  int guided_steps = 0;
  double max_guidance_update = 0.0;
  std::vector<double> pre_refinement;  // raw latent leaving the chain
};

/// One posterior sample (raw latent) started from z_init (raw) at noise level sigma_init.
inline std::vector<double> posterior_sample(const DiffusionModel& m, const Conditioning& cond, std::span<const double> z_init,
                                            double sigma_init, const SamplerConfig& cfg, Rng& rng,
                                            SampleTrace* trace = nullptr) {
  cfg.validate();
  const std::size_t d = m.layout.size();
  if (z_init.size() != d) throw std::invalid_argument("posterior_sample: z_init length does not match the model");
  const auto& s = m.schedule;
  std::vector<double> z = latent::normalize(z_init, m.stats);
  const int t0 = s.start_step(sigma_init);
  if (t0 > 0) {
    const double a = std::sqrt(s.alpha_bar[t0]), b = std::sqrt(1.0 - s.alpha_bar[t0]);
    for (auto& v : z) v = a * v + b * cfg.noise_scale * standard_normal(rng);
  }
  SampleTrace tr;
  tr.start_step = t0;
  std::vector<double> g;
  const double window = cfg.window * s.T;
  for (int t = t0; t >= 1; --t) {
    const nn::Tensor zt = nn::Tensor::constant({1, static_cast<int>(d)}, z);
    const nn::Tensor eps = m.net(zt, cond.embedding, {static_cast<double>(t) / s.T}, {true});
    const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[t - 1];
    std::vector<double> z0(d);
    for (std::size_t i = 0; i < d; ++i) z0[i] = (z[i] - std::sqrt(1.0 - ab) * eps.value()[i]) / std::sqrt(ab);
    if (cfg.guidance && t < window) {
      ++tr.guided_steps;
      for (int k = 0; k < cfg.inner_steps; ++k) {
        normalized_gradient(*cond.problem, m.stats, z0, g);
        for (std::size_t i = 0; i < d; ++i) {
          const double u = cfg.eta_g * cfg.gamma_g * std::clamp(g[i], -cfg.clip, cfg.clip);
          tr.max_guidance_update = std::max(tr.max_guidance_update, std::abs(u));
          z0[i] -= u;
        }
      }
    }
    const double beta = s.beta[t];
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab), ct = std::sqrt(s.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab);
    const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = c0 * z0[i] + ct * z[i];
      if (t > 1) z[i] += cfg.noise_scale * std::sqrt(var) * standard_normal(rng);
    }
    for (double v : z)
      if (!std::isfinite(v)) throw std::runtime_error("posterior_sample: non-finite chain state at t = " + std::to_string(t));
  }
  tr.pre_refinement = latent::denormalize(z, m.stats);

  if (cfg.lambda_ref > 0 && cfg.refine_steps > 0) {
    const std::vector<double> anchor = z;
    optim::AdamMoments st(d);
    const optim::AdamConfig adam{cfg.refine_lr, 0.9, 0.999, 1e-8};
    for (int k = 0; k < cfg.refine_steps; ++k) {
      normalized_gradient(*cond.problem, m.stats, z, g);
      for (std::size_t i = 0; i < d; ++i) g[i] += 2.0 * cfg.lambda_ref * (z[i] - anchor[i]);
      optim::adam_step(z, g, st, adam);
    }
  }
  if (trace) *trace = tr;
  return latent::denormalize(z, m.stats);
}

struct PosteriorEnsemble {
  std::vector<std::vector<double>> latents;  // raw
  std::vector<Field> members;
  Field mean, stddev;
  std::vector<double> sigma_init;
  int failures = 0;
};

/// Mean and population std per pixel.
inline void summarize(PosteriorEnsemble& e) {
  if (e.members.empty()) throw std::runtime_error("ensemble: no successful members");
  const Resolution res = e.members[0].resolution();
  e.mean = Field(res);
  e.stddev = Field(res);
  const double K = static_cast<double>(e.members.size());
  for (const auto& f : e.members)
    for (std::size_t i = 0; i < f.size(); ++i) e.mean[i] += f[i];
  for (auto& v : e.mean.storage()) v /= K;
  for (const auto& f : e.members)
    for (std::size_t i = 0; i < f.size(); ++i) e.stddev[i] += (f[i] - e.mean[i]) * (f[i] - e.mean[i]);
  for (auto& v : e.stddev.storage()) v = std::sqrt(v / K);
}

/// K posterior samples decoded on `target`. Member k uses its own stream derived from (seed, k) and
/// sigma_init ~ U[sigma_init_min, sigma_init_max].
inline PosteriorEnsemble ensemble_reconstruct(const DiffusionModel& m, const Conditioning& cond, std::span<const double> z_init,
                                              const Field& u0, Resolution target, const SamplerConfig& cfg, std::uint64_t seed,
                                              int workers = 1) {
  cfg.validate();
  const auto K = static_cast<std::size_t>(cfg.members);
  std::vector<std::vector<double>> lat(K);
  std::vector<double> sig(K);
  std::vector<char> ok(K, 0);
  parallel_for(K, workers, [&](std::size_t k) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    sig[k] = uniform(rng, cfg.sigma_init_min, cfg.sigma_init_max);
    try {
      lat[k] = posterior_sample(m, cond, z_init, sig[k], cfg, rng);
      ok[k] = 1;
    } catch (const std::runtime_error&) {
      ok[k] = 0;
    }
  });
  PosteriorEnsemble e;
  for (std::size_t k = 0; k < K; ++k) {
    if (!ok[k]) {
      ++e.failures;
      continue;
    }
    e.latents.push_back(lat[k]);
    e.sigma_init.push_back(sig[k]);
    e.members.push_back(decode(lat[k], u0, m.regime, m.layout, target));
  }
  if (2 * e.members.size() < K)
    throw std::runtime_error("ensemble_reconstruct: only " + std::to_string(e.members.size()) + " of " + std::to_string(K) +
                             " members succeeded");
  summarize(e);
  return e;
}

/// K = ceil(tr(Sigma_hat) / (d eps^2)) from pilot members (per-pixel unbiased variance); 1 when the
/// pilot has no spread.
inline int estimate_ensemble_size(const std::vector<Field>& pilot, double eps) {
  if (pilot.size() < 2) throw std::invalid_argument("estimate_ensemble_size: pilot needs at least 2 members");
  if (!(eps > 0)) throw std::invalid_argument("estimate_ensemble_size: eps must be positive");
  const std::size_t d = pilot[0].size();
  const double n = static_cast<double>(pilot.size());
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double mu = 0.0;
    for (const auto& f : pilot) mu += f[i];
    mu /= n;
    double v = 0.0;
    for (const auto& f : pilot) v += (f[i] - mu) * (f[i] - mu);
    trace += v / (n - 1.0);
  }
  if (!(trace > 0)) return 1;
  return static_cast<int>(std::ceil(trace / (static_cast<double>(d) * eps * eps) - 1e-12));
}

/// Smallest K whose Monte Carlo std of the mean is at most eta times the posterior std: K >= eta^-2.
inline int ensemble_size_for_relative_error(double eta) {
  if (!(eta > 0)) throw std::invalid_argument("ensemble_size_for_relative_error: eta must be positive");
  return static_cast<int>(std::ceil(1.0 / (eta * eta) - 1e-12));
}

}  // namespace latentpde::diffusion
