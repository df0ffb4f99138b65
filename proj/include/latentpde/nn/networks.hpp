#pragma once

#include <array>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentpde/nn/layers.hpp"
#include "latentpde/observation.hpp"

namespace latentpde::nn {

/// Widths of the encoders and the denoiser. full() gives the full-size networks; the default is the
/// desk scale (every width divided by 4).
struct NetConfig {
  int latent_dim = 0;
  std::array<int, 3> obs_channels{16, 32, 64};
  int obs_dim = 64;
  std::array<int, 3> ic_channels{8, 16, 32};
  int ic_dim = 32;
  int time_dim = 32;
  int hidden = 128;
  int blocks = 6;
  int groups = 8;

  [[nodiscard]] int embed_dim() const { return obs_dim + ic_dim; }
  [[nodiscard]] int cond_dim() const { return obs_dim + ic_dim + time_dim; }

  static NetConfig desk(int latent_dim) {
    NetConfig c;
    c.latent_dim = latent_dim;
    return c;
  }
  static NetConfig full(int latent_dim) {
    NetConfig c;
    c.latent_dim = latent_dim;
    c.obs_channels = {64, 128, 256};
    c.obs_dim = 256;
    c.ic_channels = {32, 64, 128};
    c.ic_dim = 128;
    c.time_dim = 128;
    c.hidden = 512;
    return c;
  }

  void validate() const {
    if (latent_dim < 1) throw std::invalid_argument("NetConfig: latent_dim must be positive");
    for (int c : obs_channels)
      if (c < 1) throw std::invalid_argument("NetConfig: non-positive channel count");
    for (int c : ic_channels)
      if (c < 1) throw std::invalid_argument("NetConfig: non-positive channel count");
    if (obs_dim < 1 || ic_dim < 1 || hidden < 1 || blocks < 1 || groups < 1)
      throw std::invalid_argument("NetConfig: non-positive width");
    if (time_dim < 2 || time_dim % 2 != 0) throw std::invalid_argument("NetConfig: time_dim must be even");
  }
};

inline nlohmann::json to_json(const NetConfig& c) {
  return {{"latent_dim", c.latent_dim}, {"obs_channels", c.obs_channels}, {"obs_dim", c.obs_dim},
          {"ic_channels", c.ic_channels}, {"ic_dim", c.ic_dim},         {"time_dim", c.time_dim},
          {"hidden", c.hidden},           {"blocks", c.blocks},         {"groups", c.groups}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.latent_dim = j.at("latent_dim").get<int>();
  c.obs_channels = j.at("obs_channels").get<std::array<int, 3>>();
  c.obs_dim = j.at("obs_dim").get<int>();
  c.ic_channels = j.at("ic_channels").get<std::array<int, 3>>();
  c.ic_dim = j.at("ic_dim").get<int>();
  c.time_dim = j.at("time_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.groups = j.at("groups").get<int>();
  c.validate();
  return c;
}

/// Network inputs for a batch of observation bundles.
struct ObsBatch {
  Tensor channels;  // [B, 4, h, w]: y, M, d(M), rho(M)
  Tensor u0;        // [B, 1, h, w]
  [[nodiscard]] int size() const { return channels.dim(0); }
};

inline ObsBatch make_obs_batch(const std::vector<const datagen::ObservationBundle*>& bundles) {
  if (bundles.empty()) throw std::invalid_argument("make_obs_batch: empty batch");
  const Resolution res = bundles[0]->y.resolution();
  const int B = static_cast<int>(bundles.size());
  const std::size_t cells = res.cells();
  std::vector<double> ch(static_cast<std::size_t>(B) * 4 * cells), u0(static_cast<std::size_t>(B) * cells);
  for (int b = 0; b < B; ++b) {
    const auto& bd = *bundles[b];
    if (bd.y.resolution() != res || bd.u0_lr.resolution() != res)
      throw std::invalid_argument("make_obs_batch: bundle " + std::to_string(b) + " has resolution " +
                                  to_string(bd.y.resolution()) + ", batch uses " + to_string(res));
    const auto chans = datagen::conditioning_channels(bd.y, bd.mask);
    for (int c = 0; c < 4; ++c)
      std::copy(chans[c].storage().begin(), chans[c].storage().end(), ch.begin() + (static_cast<std::size_t>(b) * 4 + c) * cells);
    std::copy(bd.u0_lr.storage().begin(), bd.u0_lr.storage().end(), u0.begin() + static_cast<std::size_t>(b) * cells);
  }
  return {Tensor::constant({B, 4, res.height, res.width}, std::move(ch)),
          Tensor::constant({B, 1, res.height, res.width}, std::move(u0))};
}

namespace detail {

inline int norm_groups(int want, int channels) { return std::gcd(want, channels); }

}  // namespace detail

/// Six-layer CNN over the 4 conditioning channels (two stride-2 stages), GAP, two-layer MLP -> c_obs.
class SparseEncoder {
 public:
  SparseEncoder() = default;
  SparseEncoder(ParamSet& ps, const std::string& name, const NetConfig& cfg, Rng& rng) : groups_(cfg.groups) {
    const auto [c1, c2, c3] = cfg.obs_channels;
    const std::array<std::array<int, 3>, 6> spec{{{4, c1, 1}, {c1, c1, 1}, {c1, c2, 2}, {c2, c2, 1}, {c2, c3, 2}, {c3, c3, 1}}};
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const auto [in, out, s] = spec[i];
      conv_[i] = Conv2d(ps, name + ".conv" + std::to_string(i), in, out, 3, s, rng);
      norm_[i] = Affine(ps, name + ".gn" + std::to_string(i), out);
    }
    fc1_ = Linear(ps, name + ".fc1", c3, cfg.obs_dim, rng);
    fc2_ = Linear(ps, name + ".fc2", cfg.obs_dim, cfg.obs_dim, rng);
  }

  [[nodiscard]] Tensor operator()(const Tensor& channels) const {
    require_rank(channels, 4, "SparseEncoder");
    if (channels.dim(1) != 4)
      throw std::invalid_argument("SparseEncoder: expected 4 input channels, got shape " + to_string(channels.shape()));
    Tensor h = channels;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      h = conv_[i](h);
      h = gelu(group_norm(h, norm_[i].gamma, norm_[i].beta, detail::norm_groups(groups_, h.dim(1))));
    }
    return fc2_(gelu(fc1_(global_avg_pool(h))));
  }

 private:
  int groups_ = 8;
  std::array<Conv2d, 6> conv_;
  std::array<Affine, 6> norm_;
  Linear fc1_, fc2_;
};

/// Three-layer CNN over the LR initial condition (stride 2 twice), GAP, linear -> c_u0.
class IcEncoder {
 public:
  IcEncoder() = default;
  IcEncoder(ParamSet& ps, const std::string& name, const NetConfig& cfg, Rng& rng) : groups_(cfg.groups) {
    const auto [c1, c2, c3] = cfg.ic_channels;
    const std::array<std::array<int, 3>, 3> spec{{{1, c1, 1}, {c1, c2, 2}, {c2, c3, 2}}};
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const auto [in, out, s] = spec[i];
      conv_[i] = Conv2d(ps, name + ".conv" + std::to_string(i), in, out, 3, s, rng);
      norm_[i] = Affine(ps, name + ".gn" + std::to_string(i), out);
    }
    fc_ = Linear(ps, name + ".fc", c3, cfg.ic_dim, rng);
  }

  [[nodiscard]] Tensor operator()(const Tensor& u0) const {
    require_rank(u0, 4, "IcEncoder");
    if (u0.dim(1) != 1) throw std::invalid_argument("IcEncoder: expected 1 input channel, got shape " + to_string(u0.shape()));
    Tensor h = u0;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      h = conv_[i](h);
      h = gelu(group_norm(h, norm_[i].gamma, norm_[i].beta, detail::norm_groups(groups_, h.dim(1))));
    }
    return fc_(global_avg_pool(h));
  }

 private:
  int groups_ = 8;
  std::array<Conv2d, 3> conv_;
  std::array<Affine, 3> norm_;
  Linear fc_;
};

/// Single-pass latent predictor: [c_obs, c_u0] -> four-layer MLP (LayerNorm + GELU) -> normalized latent.
class AmortizedEncoder {
 public:
  explicit AmortizedEncoder(const NetConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = make_rng(derive_seed(seed, "encoder"));
    obs_ = SparseEncoder(params_, "obs", cfg_, rng);
    ic_ = IcEncoder(params_, "ic", cfg_, rng);
    int in = cfg_.embed_dim();
    for (int i = 0; i < 3; ++i) {
      mlp_[i] = Linear(params_, "mlp" + std::to_string(i), in, cfg_.hidden, rng);
      ln_[i] = Affine(params_, "mlp_ln" + std::to_string(i), cfg_.hidden);
      in = cfg_.hidden;
    }
    mlp_[3] = Linear(params_, "mlp3", cfg_.hidden, cfg_.latent_dim, rng, 0.1);
  }

  [[nodiscard]] Tensor operator()(const ObsBatch& batch) const {
    Tensor h = concat({obs_(batch.channels), ic_(batch.u0)});
    for (int i = 0; i < 3; ++i) h = gelu(layer_norm(mlp_[i](h), ln_[i].gamma, ln_[i].beta));
    return mlp_[3](h);
  }

  [[nodiscard]] ParamSet& params() { return params_; }
  [[nodiscard]] const ParamSet& params() const { return params_; }
  [[nodiscard]] const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  ParamSet params_;
  SparseEncoder obs_;
  IcEncoder ic_;
  std::array<Linear, 4> mlp_;
  std::array<Affine, 3> ln_;
};

/// Noise predictor: input projection, `blocks` FiLM-modulated residual blocks (Linear + LayerNorm +
/// GELU) conditioned on [c_obs, c_u0, c_t], output projection. Dropped conditioning uses a learned
/// null embedding in place of [c_obs, c_u0].
class Denoiser {
 public:
  explicit Denoiser(const NetConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = make_rng(derive_seed(seed, "denoiser"));
    obs_ = SparseEncoder(params_, "obs", cfg_, rng);
    ic_ = IcEncoder(params_, "ic", cfg_, rng);
    null_ = params_.add("null_embedding", Tensor::parameter({cfg_.embed_dim()}, normal_values(cfg_.embed_dim(), 0.1, rng)));
    t1_ = Linear(params_, "time.fc1", cfg_.time_dim, cfg_.time_dim, rng);
    t2_ = Linear(params_, "time.fc2", cfg_.time_dim, cfg_.time_dim, rng);
    in_ = Linear(params_, "in", cfg_.latent_dim, cfg_.hidden, rng);
    for (int k = 0; k < cfg_.blocks; ++k) {
      const std::string p = "block" + std::to_string(k);
      fc_.push_back(Linear(params_, p + ".fc", cfg_.hidden, cfg_.hidden, rng));
      ln_.push_back(Affine(params_, p + ".ln", cfg_.hidden));
      film_.push_back(Linear(params_, p + ".film", cfg_.cond_dim(), 2 * cfg_.hidden, rng, 0.1));
    }
    out_ln_ = Affine(params_, "out.ln", cfg_.hidden);
    out_ = Linear(params_, "out", cfg_.hidden, cfg_.latent_dim, rng, 0.1);
  }

  /// [c_obs, c_u0] for a batch; independent of the noise level, so samplers compute it once.
  [[nodiscard]] Tensor embed(const ObsBatch& batch) const { return concat({obs_(batch.channels), ic_(batch.u0)}); }

  [[nodiscard]] Tensor null_embedding() const { return null_; }

  /// eps_hat for z_t [B, D] at noise fractions t_frac [B]; keep[b] = false drops conditioning.
  [[nodiscard]] Tensor operator()(const Tensor& z_t, const Tensor& embedding, const std::vector<double>& t_frac,
                                  const std::vector<bool>& keep) const {
    require_rank(z_t, 2, "Denoiser input");
    if (z_t.dim(1) != cfg_.latent_dim)
      throw std::invalid_argument("Denoiser: latent width " + std::to_string(z_t.dim(1)) + ", network expects " +
                                  std::to_string(cfg_.latent_dim));
    const int B = z_t.dim(0);
    require_shape(embedding, {B, cfg_.embed_dim()}, "Denoiser embedding");
    if (t_frac.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("Denoiser: t_frac has wrong length");
    const Tensor temb = sinusoidal_time_embed(Tensor::constant({B}, t_frac), cfg_.time_dim);
    const Tensor c_t = t2_(gelu(t1_(temb)));
    const Tensor cond = concat({select_rows(embedding, null_, keep), c_t});
    const Tensor ones = Tensor::constant({B, cfg_.hidden}, std::vector<double>(static_cast<std::size_t>(B) * cfg_.hidden, 1.0));
    Tensor h = in_(z_t);
    for (int k = 0; k < cfg_.blocks; ++k) {
      const Tensor ss = film_[k](cond);
      const Tensor sc = add(ones, slice_cols(ss, 0, cfg_.hidden));
      const Tensor sh = slice_cols(ss, cfg_.hidden, cfg_.hidden);
      const Tensor a = layer_norm(fc_[k](h), ln_[k].gamma, ln_[k].beta);
      h = add(h, gelu(film_modulate(a, sc, sh)));
    }
    return out_(gelu(layer_norm(h, out_ln_.gamma, out_ln_.beta)));
  }

  [[nodiscard]] ParamSet& params() { return params_; }
  [[nodiscard]] const ParamSet& params() const { return params_; }
  [[nodiscard]] const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  ParamSet params_;
  SparseEncoder obs_;
  IcEncoder ic_;
  Tensor null_;
  Linear t1_, t2_, in_, out_;
  std::vector<Linear> fc_, film_;
  std::vector<Affine> ln_;
  Affine out_ln_;
};

}  // namespace latentpde::nn
