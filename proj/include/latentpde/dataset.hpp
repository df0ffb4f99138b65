#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentpde/container.hpp"
#include "latentpde/decoder.hpp"
#include "latentpde/initial_conditions.hpp"
#include "latentpde/latent.hpp"
#include "latentpde/masks.hpp"
#include "latentpde/observation.hpp"
#include "latentpde/parallel.hpp"
#include "latentpde/random.hpp"

namespace latentpde::datagen {

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train, val or test)");
}

struct DatasetConfig {
  latent::RegimeSpec regime = latent::find_regime("diffusion");
  Resolution hr{32, 32};
  int pool_factor = 2;
  int forcing_modes = 4;
  bool forcing_enabled = true;
  double sigma_obs = 0.15;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  int count = 200;
  double sparsity_min = 0.01;
  double sparsity_max = 0.15;
  std::vector<MaskKind> mask_kinds{kTrainMaskKinds.begin(), kTrainMaskKinds.end()};
  std::vector<IcKind> ic_kinds{kAllIcKinds.begin(), kAllIcKinds.end()};
  IcConfig ic;

  [[nodiscard]] Resolution lr() const { return {hr.height / pool_factor, hr.width / pool_factor}; }
  [[nodiscard]] latent::LatentLayout layout() const { return {forcing_modes}; }

  void validate() const {
    regime.validate();
    require_valid(hr, "DatasetConfig");
    if (pool_factor < 1 || hr.height % pool_factor != 0 || hr.width % pool_factor != 0)
      throw std::invalid_argument("DatasetConfig: pool factor must divide the HR resolution");
    forcing::require_fits(forcing_modes, lr());
    if (!(sparsity_min > 0 && sparsity_min <= sparsity_max && sparsity_max <= 1))
      throw std::invalid_argument("DatasetConfig: need 0 < sparsity_min <= sparsity_max <= 1");
    if (sigma_obs < 0) throw std::invalid_argument("DatasetConfig: sigma_obs must be non-negative");
    if (count < 0) throw std::invalid_argument("DatasetConfig: negative sample count");
    if (mask_kinds.empty() || ic_kinds.empty()) throw std::invalid_argument("DatasetConfig: empty kind list");
  }
};

struct Sample {
  std::uint64_t seed = 0;
  IcKind ic_kind = IcKind::BroadbandFourier;
  MaskKind mask_kind = MaskKind::Random;
  double sparsity = 0.0;
  std::vector<double> z_raw;
  Field u0_hr, u0_lr, u_out_hr, u_out_lr;
  Mask mask;
  Field y;
};

struct Dataset {
  DatasetConfig config;
  std::vector<Sample> samples;

  [[nodiscard]] ObservationBundle bundle(std::size_t i) const {
    const Sample& s = samples.at(i);
    return {s.y, s.mask, s.u0_lr, config.sigma_obs, config.pool_factor, config.regime.family, config.regime.name};
  }
};

/// Seed of sample `index`; splits draw from disjoint derived streams.
inline std::uint64_t sample_seed(const DatasetConfig& cfg, std::size_t index) {
  const std::uint64_t split_seed = derive_seed(cfg.seed, "split:" + to_string(cfg.split) + ":" + cfg.regime.name);
  return derive_seed(split_seed, static_cast<std::uint64_t>(index));
}

inline Sample generate_sample(const DatasetConfig& cfg, std::size_t index) {
  Sample s;
  s.seed = sample_seed(cfg, index);
  const auto layout = cfg.layout();
  Rng ic_rng = make_rng(derive_seed(s.seed, "ic"));
  Rng latent_rng = make_rng(derive_seed(s.seed, "latent"));
  Rng mask_rng = make_rng(derive_seed(s.seed, "mask"));
  Rng noise_rng = make_rng(derive_seed(s.seed, "noise"));

  s.ic_kind = cfg.ic_kinds[static_cast<std::size_t>(uniform_int(ic_rng, 0, static_cast<int>(cfg.ic_kinds.size()) - 1))];
  s.u0_hr = generate_initial_condition(s.ic_kind, cfg.hr, ic_rng, cfg.ic);
  s.z_raw = latent::sample_regime_latent(cfg.regime, layout, cfg.forcing_enabled, latent_rng).values;
  s.u_out_hr = decode(s.z_raw, s.u0_hr, cfg.regime, layout, cfg.hr);
  s.u0_lr = avg_pool(s.u0_hr, cfg.pool_factor);
  s.u_out_lr = decode(s.z_raw, s.u0_lr, cfg.regime, layout, cfg.lr());

  s.mask_kind =
      cfg.mask_kinds[static_cast<std::size_t>(uniform_int(mask_rng, 0, static_cast<int>(cfg.mask_kinds.size()) - 1))];
  s.sparsity = cfg.sparsity_min == cfg.sparsity_max ? cfg.sparsity_min : uniform(mask_rng, cfg.sparsity_min, cfg.sparsity_max);
  s.mask = generate_mask(s.mask_kind, s.sparsity, cfg.lr(), mask_rng);
  s.y = observe(s.u_out_hr, cfg.pool_factor, s.mask, cfg.sigma_obs, noise_rng);
  return s;
}

inline Dataset build_dataset(const DatasetConfig& cfg, int workers = 1) {
  cfg.validate();
  Dataset ds{cfg, std::vector<Sample>(static_cast<std::size_t>(cfg.count))};
  parallel_for(ds.samples.size(), workers, [&](std::size_t i) { ds.samples[i] = generate_sample(cfg, i); });
  return ds;
}

inline nlohmann::json to_json(const DatasetConfig& c) {
  nlohmann::json j;
  j["regime"] = latent::to_json(c.regime);
  j["hr"] = {c.hr.height, c.hr.width};
  j["lr"] = {c.lr().height, c.lr().width};
  j["pool_factor"] = c.pool_factor;
  j["forcing_modes"] = c.forcing_modes;
  j["forcing_enabled"] = c.forcing_enabled;
  j["sigma_obs"] = c.sigma_obs;
  j["split"] = to_string(c.split);
  j["seed"] = c.seed;
  j["count"] = c.count;
  j["sparsity"] = {c.sparsity_min, c.sparsity_max};
  for (auto k : c.mask_kinds) j["mask_kinds"].push_back(to_string(k));
  for (auto k : c.ic_kinds) j["ic_kinds"].push_back(to_string(k));
  j["ic"] = {{"broadband_decay", c.ic.broadband_decay},   {"front_sharpness", c.ic.front_sharpness},
             {"front_level_modes", c.ic.front_level_modes}, {"dipole_width", {c.ic.dipole_width_min, c.ic.dipole_width_max}},
             {"multiscale_bumps", c.ic.multiscale_bumps}, {"multiscale_modes", c.ic.multiscale_modes},
             {"multiscale_noise", c.ic.multiscale_noise}};
  return j;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.regime = latent::regime_from_json(j.at("regime"));
  c.hr = {j.at("hr").at(0).get<int>(), j.at("hr").at(1).get<int>()};
  c.pool_factor = j.at("pool_factor").get<int>();
  c.forcing_modes = j.at("forcing_modes").get<int>();
  c.forcing_enabled = j.at("forcing_enabled").get<bool>();
  c.sigma_obs = j.at("sigma_obs").get<double>();
  c.split = split_from_string(j.at("split").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.count = j.at("count").get<int>();
  c.sparsity_min = j.at("sparsity").at(0).get<double>();
  c.sparsity_max = j.at("sparsity").at(1).get<double>();
  c.mask_kinds.clear();
  for (const auto& k : j.at("mask_kinds")) c.mask_kinds.push_back(mask_kind_from_string(k.get<std::string>()));
  c.ic_kinds.clear();
  for (const auto& k : j.at("ic_kinds")) c.ic_kinds.push_back(ic_kind_from_string(k.get<std::string>()));
  if (j.contains("ic")) {
    const auto& ic = j.at("ic");
    c.ic.broadband_decay = ic.at("broadband_decay").get<double>();
    c.ic.front_sharpness = ic.at("front_sharpness").get<double>();
    c.ic.front_level_modes = ic.at("front_level_modes").get<int>();
    c.ic.dipole_width_min = ic.at("dipole_width").at(0).get<double>();
    c.ic.dipole_width_max = ic.at("dipole_width").at(1).get<double>();
    c.ic.multiscale_bumps = ic.at("multiscale_bumps").get<int>();
    c.ic.multiscale_modes = ic.at("multiscale_modes").get<int>();
    c.ic.multiscale_noise = ic.at("multiscale_noise").get<double>();
  }
  c.validate();
  return c;
}

inline constexpr const char* kDatasetMagic = "LPDEDSET";

/// Record layout (float64 each): z_raw, u0_hr, u0_lr, u_out_hr, u_out_lr, mask, y.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = "dataset";
  header["config"] = to_json(ds.config);
  header["record_layout"] = {"z_raw", "u0_hr", "u0_lr", "u_out_hr", "u_out_lr", "mask", "y"};
  header["samples"] = nlohmann::json::array();
  std::vector<double> payload;
  for (const auto& s : ds.samples) {
    header["samples"].push_back({{"seed", s.seed},
                                 {"ic_kind", to_string(s.ic_kind)},
                                 {"mask_kind", to_string(s.mask_kind)},
                                 {"sparsity", s.sparsity}});
    payload.insert(payload.end(), s.z_raw.begin(), s.z_raw.end());
    for (const Field* f : {&s.u0_hr, &s.u0_lr, &s.u_out_hr, &s.u_out_lr, &s.mask, &s.y})
      payload.insert(payload.end(), f->storage().begin(), f->storage().end());
  }
  io::write_container(path, kDatasetMagic, header, payload);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  const auto c = io::read_container(path, kDatasetMagic);
  Dataset ds;
  try {
    ds.config = dataset_config_from_json(c.header.at("config"));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": bad dataset header: " + e.what());
  }
  const auto hr = ds.config.hr;
  const auto lr = ds.config.lr();
  const std::size_t dim = ds.config.layout().size();
  io::PayloadCursor cur(c.payload);
  for (const auto& meta : c.header.at("samples")) {
    Sample s;
    s.seed = meta.at("seed").get<std::uint64_t>();
    s.ic_kind = ic_kind_from_string(meta.at("ic_kind").get<std::string>());
    s.mask_kind = mask_kind_from_string(meta.at("mask_kind").get<std::string>());
    s.sparsity = meta.at("sparsity").get<double>();
    s.z_raw = cur.take(dim);
    s.u0_hr = Field(hr, cur.take(hr.cells()));
    s.u0_lr = Field(lr, cur.take(lr.cells()));
    s.u_out_hr = Field(hr, cur.take(hr.cells()));
    s.u_out_lr = Field(lr, cur.take(lr.cells()));
    s.mask = Mask(lr, cur.take(lr.cells()));
    s.y = Field(lr, cur.take(lr.cells()));
    ds.samples.push_back(std::move(s));
  }
  if (!cur.done()) throw std::runtime_error(path.string() + ": trailing payload after the last record");
  return ds;
}

}  // namespace latentpde::datagen
