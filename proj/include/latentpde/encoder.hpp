#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "latentpde/dataset.hpp"
#include "latentpde/nn/checkpoint.hpp"
#include "latentpde/nn/networks.hpp"
#include "latentpde/nn/residual_op.hpp"

namespace latentpde::inference {

struct EncoderTrainConfig {
  int epochs = 40;
  int batch = 16;
  double lr = 1e-3;
  double lambda_enc = 0.01;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0 || batch < 1) throw std::invalid_argument("EncoderTrainConfig: need epochs >= 0 and batch >= 1");
    if (!(lr > 0) || lambda_enc < 0) throw std::invalid_argument("EncoderTrainConfig: bad learning rate or lambda_enc");
  }
};

inline nlohmann::json to_json(const EncoderTrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"lambda_enc", c.lambda_enc}, {"grad_clip", c.grad_clip}, {"seed", c.seed}};
}

inline EncoderTrainConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.lambda_enc = j.value("lambda_enc", c.lambda_enc);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

/// Moments of the regime prior in raw coordinates: logit(U(0,1)) has mean 0 and std pi/sqrt(3);
/// forcing entries have std tau (1 when forcing is off, so the scale stays positive).
inline latent::LatentStats prior_stats(const latent::RegimeSpec& regime, const latent::LatentLayout& layout,
                                       bool forcing_enabled) {
  latent::LatentStats s = latent::LatentStats::identity(layout.size(), latent::Branch::Encoder);
  for (std::size_t j = 0; j < 3; ++j) s.sigma[j] = std::numbers::pi / std::sqrt(3.0);
  const double tau = forcing_enabled && regime.forcing_std > 0 ? regime.forcing_std : 1.0;
  for (std::size_t i = 3; i < s.sigma.size(); ++i) s.sigma[i] = tau;
  return s;
}

/// Trained amortized encoder; `io_stats` maps its output to raw latents.
struct EncoderModel {
  nn::AmortizedEncoder net;
  latent::LatentStats io_stats;
  latent::RegimeSpec regime;
  latent::LatentLayout layout;
  std::vector<double> epoch_loss;
};

inline std::vector<MaskedResidual> residual_problems(const datagen::Dataset& ds) {
  std::vector<MaskedResidual> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.emplace_back(ds.config.regime, ds.config.layout(), s.u0_lr, s.y, s.mask);
  return out;
}

/// Self-supervised training through the fixed decoder: mean_b J(z_b) + lambda_enc ||z_b||^2.
inline EncoderModel train_encoder(const datagen::Dataset& ds, const EncoderTrainConfig& cfg, const nn::NetConfig& net_cfg) {
  cfg.validate();
  if (ds.samples.empty()) throw std::invalid_argument("train_encoder: empty dataset");
  const auto layout = ds.config.layout();
  if (net_cfg.latent_dim != static_cast<int>(layout.size()))
    throw std::invalid_argument("train_encoder: network latent_dim " + std::to_string(net_cfg.latent_dim) +
                                " does not match dataset latent length " + std::to_string(layout.size()));
  EncoderModel m{nn::AmortizedEncoder(net_cfg, cfg.seed), prior_stats(ds.config.regime, layout, ds.config.forcing_enabled),
                 ds.config.regime, layout, {}};
  const auto problems = residual_problems(ds);
  std::vector<datagen::ObservationBundle> bundles;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) bundles.push_back(ds.bundle(i));

  nn::Adam opt(m.net.params(), {cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng = make_rng(derive_seed(cfg.seed, "encoder-shuffle"));
  std::vector<std::size_t> order(ds.samples.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<const datagen::ObservationBundle*> bb;
      std::vector<const MaskedResidual*> pp;
      for (std::size_t k = start; k < end; ++k) {
        bb.push_back(&bundles[order[k]]);
        pp.push_back(&problems[order[k]]);
      }
      const nn::Tensor z = m.net(nn::make_obs_batch(bb));
      const nn::Tensor J = nn::mean(nn::masked_residual(z, pp, m.io_stats));
      const nn::Tensor reg = nn::scale(nn::sum(nn::mul(z, z)), cfg.lambda_enc / static_cast<double>(end - start));
      const nn::Tensor loss = nn::add(J, reg);
      if (!std::isfinite(loss.item())) {
        std::ostringstream msg;
        msg << "train_encoder: non-finite loss at epoch " << epoch << ", batch starting " << start;
        throw std::runtime_error(msg.str());
      }
      m.net.params().zero_grad();
      loss.backward();
      nn::clip_grad_norm(m.net.params(), cfg.grad_clip);
      opt.step();
      total += loss.item() * static_cast<double>(end - start);
    }
    m.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return m;
}

/// Raw latents predicted for each bundle, in batches.
inline std::vector<std::vector<double>> encoder_predict(const EncoderModel& m,
                                                        const std::vector<datagen::ObservationBundle>& bundles,
                                                        int batch = 32) {
  std::vector<std::vector<double>> out;
  const std::size_t d = m.layout.size();
  for (std::size_t start = 0; start < bundles.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(bundles.size(), start + static_cast<std::size_t>(batch));
    std::vector<const datagen::ObservationBundle*> bb;
    for (std::size_t k = start; k < end; ++k) bb.push_back(&bundles[k]);
    const nn::Tensor z = m.net(nn::make_obs_batch(bb));
    for (std::size_t k = 0; k < end - start; ++k)
      out.push_back(latent::denormalize(std::span(z.value()).subspan(k * d, d), m.io_stats));
  }
  return out;
}

inline void save_encoder(const EncoderModel& m, const std::filesystem::path& path, const EncoderTrainConfig& cfg) {
  nlohmann::json h;
  h["kind"] = "encoder";
  h["net"] = nn::to_json(m.net.config());
  h["io_stats"] = latent::to_json(m.io_stats);
  h["regime"] = latent::to_json(m.regime);
  h["forcing_modes"] = m.layout.forcing_modes;
  h["train"] = to_json(cfg);
  h["seed"] = cfg.seed;
  h["step"] = cfg.epochs;
  h["epoch_loss"] = m.epoch_loss;
  nn::save_checkpoint(path, h, m.net.params());
}

inline EncoderModel load_encoder(const std::filesystem::path& path) {
  const auto c = nn::read_checkpoint(path);
  if (c.header.value("kind", "") != "encoder") throw std::runtime_error(path.string() + ": not an encoder checkpoint");
  EncoderModel m{nn::AmortizedEncoder(nn::net_config_from_json(c.header.at("net"))),
                 latent::stats_from_json(c.header.at("io_stats")),
                 latent::regime_from_json(c.header.at("regime")),
                 {c.header.at("forcing_modes").get<int>()},
                 c.header.value("epoch_loss", std::vector<double>{})};
  if (m.io_stats.mu.size() != m.layout.size())
    throw std::runtime_error(path.string() + ": latent statistics do not match the latent layout");
  nn::load_parameters(c, m.net.params(), path.string());
  return m;
}

}  // namespace latentpde::inference
