#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentpde/da.hpp"
#include "latentpde/dataset.hpp"
#include "latentpde/diffusion.hpp"
#include "latentpde/encoder.hpp"
#include "latentpde/harness/records.hpp"
#include "latentpde/map.hpp"
#include "latentpde/metrics.hpp"

namespace latentpde::harness {

namespace fs = std::filesystem;

struct ExperimentConfig {
  std::string regime = "diffusion";
  Resolution hr{32, 32};
  int pool_factor = 2;
  int forcing_modes = 4;
  bool forcing_enabled = true;
  double sigma_obs = 0.15;
  int n_train = 200, n_val = 50, n_test = 50;
  double train_sparsity_min = 0.01, train_sparsity_max = 0.15;
  std::vector<datagen::MaskKind> train_masks{datagen::kTrainMaskKinds.begin(), datagen::kTrainMaskKinds.end()};
  double eval_sparsity = 0.05;
  std::vector<datagen::MaskKind> eval_masks = all_mask_kinds();
  std::string net = "desk";  // desk | full
  inference::MapConfig map = default_map();
  inference::EncoderTrainConfig encoder;
  diffusion::DiffusionTrainConfig diffusion;
  diffusion::SamplerConfig sampler;
  da::VarConfig var;
  da::EnkfConfig enkf;
  std::uint64_t seed = 0;
  int workers = 1;
  bool plots = false;

  static std::vector<datagen::MaskKind> all_mask_kinds() {
    std::vector<datagen::MaskKind> k(datagen::kTrainMaskKinds.begin(), datagen::kTrainMaskKinds.end());
    k.insert(k.end(), datagen::kEvalMaskKinds.begin(), datagen::kEvalMaskKinds.end());
    return k;
  }
  static inference::MapConfig default_map() {
    inference::MapConfig m;
    m.steps = 80;
    return m;
  }

  [[nodiscard]] datagen::DatasetConfig dataset(datagen::Split split) const {
    datagen::DatasetConfig c;
    c.regime = latent::find_regime(regime);
    c.hr = hr;
    c.pool_factor = pool_factor;
    c.forcing_modes = forcing_modes;
    c.forcing_enabled = forcing_enabled;
    c.sigma_obs = sigma_obs;
    c.split = split;
    c.seed = seed;
    if (split == datagen::Split::Train) {
      c.count = n_train;
      c.sparsity_min = train_sparsity_min;
      c.sparsity_max = train_sparsity_max;
      c.mask_kinds = train_masks;
    } else {
      c.count = split == datagen::Split::Val ? n_val : n_test;
      c.sparsity_min = c.sparsity_max = eval_sparsity;
      c.mask_kinds = eval_masks;
    }
    c.validate();
    return c;
  }

  [[nodiscard]] nn::NetConfig network(int latent_dim) const {
    if (net == "desk") return nn::NetConfig::desk(latent_dim);
    if (net == "full") return nn::NetConfig::full(latent_dim);
    throw std::invalid_argument("unknown network size '" + net + "' (expected desk or full)");
  }

  void validate() const {
    (void)dataset(datagen::Split::Train);
    (void)dataset(datagen::Split::Test);
    (void)network(1);
    map.validate();
    encoder.validate();
    diffusion.validate();
    sampler.validate();
    var.validate();
    enkf.validate();
    if (workers < 1) throw std::invalid_argument("ExperimentConfig: workers must be >= 1");
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["regime"] = c.regime;
  j["hr"] = {c.hr.height, c.hr.width};
  j["pool_factor"] = c.pool_factor;
  j["forcing_modes"] = c.forcing_modes;
  j["forcing_enabled"] = c.forcing_enabled;
  j["sigma_obs"] = c.sigma_obs;
  j["counts"] = {{"train", c.n_train}, {"val", c.n_val}, {"test", c.n_test}};
  j["train_masks"] = {{"sparsity", {c.train_sparsity_min, c.train_sparsity_max}}, {"kinds", nlohmann::json::array()}};
  for (auto k : c.train_masks) j["train_masks"]["kinds"].push_back(datagen::to_string(k));
  j["eval_masks"] = {{"sparsity", c.eval_sparsity}, {"kinds", nlohmann::json::array()}};
  for (auto k : c.eval_masks) j["eval_masks"]["kinds"].push_back(datagen::to_string(k));
  j["net"] = c.net;
  j["map"] = inference::to_json(c.map);
  j["encoder"] = inference::to_json(c.encoder);
  j["diffusion"] = diffusion::to_json(c.diffusion);
  j["sampler"] = diffusion::to_json(c.sampler);
  j["var"] = da::to_json(c.var);
  j["enkf"] = da::to_json(c.enkf);
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["plots"] = c.plots;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected so typos surface.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"regime", "hr",  "pool_factor", "forcing_modes", "forcing_enabled", "sigma_obs",
                                              "counts", "train_masks", "eval_masks", "net", "map", "encoder", "diffusion",
                                              "sampler", "var", "enkf", "seed", "workers", "plots"};
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw std::invalid_argument("config: unknown key '" + k + "'");
  ExperimentConfig c;
  c.regime = j.value("regime", c.regime);
  if (j.contains("hr")) c.hr = {j.at("hr").at(0).get<int>(), j.at("hr").at(1).get<int>()};
  c.pool_factor = j.value("pool_factor", c.pool_factor);
  c.forcing_modes = j.value("forcing_modes", c.forcing_modes);
  c.forcing_enabled = j.value("forcing_enabled", c.forcing_enabled);
  c.sigma_obs = j.value("sigma_obs", c.sigma_obs);
  if (j.contains("counts")) {
    const auto& n = j.at("counts");
    c.n_train = n.value("train", c.n_train);
    c.n_val = n.value("val", c.n_val);
    c.n_test = n.value("test", c.n_test);
  }
  auto kinds = [](const nlohmann::json& a) {
    std::vector<datagen::MaskKind> out;
    for (const auto& k : a) out.push_back(datagen::mask_kind_from_string(k.get<std::string>()));
    return out;
  };
  if (j.contains("train_masks")) {
    const auto& m = j.at("train_masks");
    if (m.contains("sparsity")) {
      c.train_sparsity_min = m.at("sparsity").at(0).get<double>();
      c.train_sparsity_max = m.at("sparsity").at(1).get<double>();
    }
    if (m.contains("kinds")) c.train_masks = kinds(m.at("kinds"));
  }
  if (j.contains("eval_masks")) {
    const auto& m = j.at("eval_masks");
    c.eval_sparsity = m.value("sparsity", c.eval_sparsity);
    if (m.contains("kinds")) c.eval_masks = kinds(m.at("kinds"));
  }
  c.net = j.value("net", c.net);
  if (j.contains("map")) c.map = inference::map_config_from_json(j.at("map"));
  if (j.contains("encoder")) c.encoder = inference::encoder_config_from_json(j.at("encoder"));
  if (j.contains("diffusion")) c.diffusion = diffusion::diffusion_config_from_json(j.at("diffusion"));
  if (j.contains("sampler")) c.sampler = diffusion::sampler_config_from_json(j.at("sampler"));
  if (j.contains("var")) {
    const auto& v = j.at("var");
    c.var.sigma_b = v.value("sigma_b", c.var.sigma_b);
    c.var.length = v.value("L", c.var.length);
    c.var.power = v.value("p", c.var.power);
    c.var.cg_tol = v.value("cg_tol", c.var.cg_tol);
    c.var.cg_max_iter = v.value("cg_max_iter", c.var.cg_max_iter);
  }
  if (j.contains("enkf")) {
    const auto& e = j.at("enkf");
    c.enkf.members = e.value("members", c.enkf.members);
    c.enkf.cycles = e.value("cycles", c.enkf.cycles);
    c.enkf.sigma_e = e.value("sigma_e", c.enkf.sigma_e);
    c.enkf.smoothing_passes = e.value("smoothing_passes", c.enkf.smoothing_passes);
    c.enkf.post_smoothing_passes = e.value("post_smoothing_passes", c.enkf.post_smoothing_passes);
    c.enkf.correct_observed = e.value("correct_observed", c.enkf.correct_observed);
  }
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  c.plots = j.value("plots", c.plots);
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  try {
    return experiment_config_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed config: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// ---- latent files ----------------------------------------------------------------------------

inline constexpr const char* kLatentMagic = "LPDELATN";

struct LatentSet {
  latent::Branch branch = latent::Branch::Map;
  std::string split;
  std::vector<std::vector<double>> latents;  // raw
  std::vector<double> residuals;             // masked residual J of each latent
};

inline void save_latents(const LatentSet& s, const fs::path& path) {
  nlohmann::json h;
  h["kind"] = "latents";
  h["branch"] = latent::to_string(s.branch);
  h["split"] = s.split;
  h["count"] = s.latents.size();
  h["dim"] = s.latents.empty() ? 0 : s.latents.front().size();
  h["residuals"] = s.residuals;
  std::vector<double> payload;
  for (const auto& z : s.latents) payload.insert(payload.end(), z.begin(), z.end());
  io::write_container(path, kLatentMagic, h, payload);
}

inline LatentSet load_latents(const fs::path& path) {
  const auto c = io::read_container(path, kLatentMagic);
  LatentSet s;
  s.branch = latent::branch_from_string(c.header.at("branch").get<std::string>());
  s.split = c.header.at("split").get<std::string>();
  s.residuals = c.header.at("residuals").get<std::vector<double>>();
  const auto n = c.header.at("count").get<std::size_t>(), d = c.header.at("dim").get<std::size_t>();
  io::PayloadCursor cur(c.payload);
  for (std::size_t i = 0; i < n; ++i) s.latents.push_back(cur.take(d));
  if (!cur.done()) throw std::runtime_error(path.string() + ": trailing payload after the last latent");
  return s;
}

inline MaskedResidual residual_of(const datagen::Dataset& ds, std::size_t i) {
  const auto& s = ds.samples.at(i);
  return {ds.config.regime, ds.config.layout(), s.u0_lr, s.y, s.mask};
}

inline LatentSet fit_map_latents(const datagen::Dataset& ds, const inference::MapConfig& cfg, std::uint64_t seed, int workers) {
  LatentSet out{latent::Branch::Map, datagen::to_string(ds.config.split), std::vector<std::vector<double>>(ds.samples.size()),
                std::vector<double>(ds.samples.size())};
  const std::uint64_t base = derive_seed(seed, "map:" + out.split);
  parallel_for(ds.samples.size(), workers, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(base, static_cast<std::uint64_t>(i)));
    const auto r = inference::map_estimate(residual_of(ds, i), cfg, rng);
    out.latents[i] = r.z;
    out.residuals[i] = r.residual;
  });
  return out;
}

inline std::vector<datagen::ObservationBundle> bundles_of(const datagen::Dataset& ds) {
  std::vector<datagen::ObservationBundle> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) out.push_back(ds.bundle(i));
  return out;
}

inline LatentSet encoder_latents(const inference::EncoderModel& m, const datagen::Dataset& ds) {
  LatentSet out{latent::Branch::Encoder, datagen::to_string(ds.config.split), inference::encoder_predict(m, bundles_of(ds)), {}};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) out.residuals.push_back(residual_of(ds, i).value(out.latents[i]));
  return out;
}

// ---- evaluation ------------------------------------------------------------------------------

inline std::string method_name(const std::string& method, latent::Branch b) { return method + "-" + latent::to_string(b); }

inline void push_metrics(std::vector<ResultRow>& rows, const datagen::Dataset& ds, std::size_t i, const std::string& method,
                         const Field& pred, const std::vector<Field>* members, std::uint64_t seed) {
  const auto& s = ds.samples[i];
  auto row = [&](const std::string& metric, double v) {
    rows.push_back({ds.config.regime.name, datagen::to_string(s.mask_kind), s.sparsity, ds.config.sigma_obs, method, metric, v, seed,
                    std::to_string(i)});
  };
  row("rmse", metrics::rmse(pred, s.u_out_hr));
  row("psd_log_err", metrics::psd_log_err(pred, s.u_out_hr));
  row("mae", metrics::mae(pred, s.u_out_hr));
  if (members && members->size() >= 2) row("crps", metrics::crps(*members, s.u_out_hr));
}

struct EnsembleArtifacts {
  std::vector<Field> mean, stddev;
};

/// LatentPDE ensemble means for every instance, scored against the HR truth.
inline std::vector<ResultRow> evaluate_latentpde(const datagen::Dataset& ds, const LatentSet& init, const diffusion::DiffusionModel& m,
                                                 const diffusion::SamplerConfig& sampler, std::uint64_t seed, int workers,
                                                 EnsembleArtifacts* artifacts = nullptr, const std::string& method = "latentpde") {
  if (init.latents.size() != ds.samples.size()) throw std::invalid_argument("evaluate: latent count does not match the dataset");
  if (init.branch != m.stats.branch)
    throw std::invalid_argument("evaluate: " + latent::to_string(init.branch) + " initializations given to a " +
                                latent::to_string(m.stats.branch) + "-branch diffusion model");
  const std::size_t n = ds.samples.size();
  std::vector<diffusion::PosteriorEnsemble> ens(n);
  const std::uint64_t base = derive_seed(seed, "sampler:" + datagen::to_string(ds.config.split));
  parallel_for(n, workers, [&](std::size_t i) {
    const auto problem = residual_of(ds, i);
    const auto cond = diffusion::condition_on(m, ds.bundle(i), problem);
    ens[i] = diffusion::ensemble_reconstruct(m, cond, init.latents[i], spectral::lift_pooled(ds.samples[i].u0_lr, ds.config.pool_factor), ds.config.hr, sampler,
                                             derive_seed(base, static_cast<std::uint64_t>(i)));
  });
  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    push_metrics(rows, ds, i, method_name(method, init.branch), ens[i].mean, &ens[i].members, seed);
    if (artifacts) {
      artifacts->mean.push_back(ens[i].mean);
      artifacts->stddev.push_back(ens[i].stddev);
    }
  }
  return rows;
}

/// Decoded initialization, 3D-Var and EnKF from the same background latents.
inline std::vector<ResultRow> evaluate_baselines(const datagen::Dataset& ds, const LatentSet& init, const da::VarConfig& var,
                                                 const da::EnkfConfig& enkf, std::uint64_t seed, int workers) {
  if (init.latents.size() != ds.samples.size()) throw std::invalid_argument("baselines: latent count does not match the dataset");
  const std::size_t n = ds.samples.size();
  const auto& c = ds.config;
  std::vector<Field> dec(n), v(n), e(n);
  const std::uint64_t base = derive_seed(seed, "enkf:" + datagen::to_string(c.split));
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& s = ds.samples[i];
    dec[i] = decode(init.latents[i], spectral::lift_pooled(s.u0_lr, c.pool_factor), c.regime, c.layout(), c.hr);
    const Field xb = decode(init.latents[i], bilinear_upsample(s.u0_lr, c.pool_factor), c.regime, c.layout(), c.hr);
    v[i] = da::threedvar_analyze(s.y, s.mask, c.pool_factor, c.sigma_obs, xb, var).analysis;
    Rng rng = make_rng(derive_seed(base, static_cast<std::uint64_t>(i)));
    e[i] = da::enkf_analyze(s.y, s.mask, c.pool_factor, c.sigma_obs, xb, enkf, rng).mean;
  });
  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    push_metrics(rows, ds, i, method_name("init", init.branch), dec[i], nullptr, seed);
    push_metrics(rows, ds, i, method_name("3dvar", init.branch), v[i], nullptr, seed);
    push_metrics(rows, ds, i, method_name("enkf", init.branch), e[i], nullptr, seed);
  }
  return rows;
}

// ---- branch selection ------------------------------------------------------------------------

struct BranchDecision {
  latent::Branch branch = latent::Branch::Map;
  double val_rmse_map = 0.0, val_rmse_encoder = 0.0;
};

/// Lower mean validation RMSE of the LatentPDE ensemble wins; ties go to MAP.
inline BranchDecision select_branch(const std::vector<ResultRow>& val_rows) {
  BranchDecision d;
  d.val_rmse_map = mean_of(val_rows, "latentpde-map", "rmse");
  d.val_rmse_encoder = mean_of(val_rows, "latentpde-encoder", "rmse");
  d.branch = d.val_rmse_encoder < d.val_rmse_map ? latent::Branch::Encoder : latent::Branch::Map;
  return d;
}

inline void write_decision(const BranchDecision& d, const std::vector<fs::path>& val_results, const fs::path& path) {
  nlohmann::json j;
  j["branch"] = latent::to_string(d.branch);
  j["val_rmse"] = {{"map", d.val_rmse_map}, {"encoder", d.val_rmse_encoder}};
  j["validation_results"] = nlohmann::json::array();
  for (const auto& p : val_results) j["validation_results"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline BranchDecision read_decision(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing branch decision file " + path.string() + " (run select-branch on validation results first)");
  const auto j = nlohmann::json::parse(read_file(path));
  BranchDecision d;
  d.branch = latent::branch_from_string(j.at("branch").get<std::string>());
  d.val_rmse_map = j.at("val_rmse").at("map").get<double>();
  d.val_rmse_encoder = j.at("val_rmse").at("encoder").get<double>();
  for (const auto& v : j.at("validation_results")) {
    const fs::path p = v.at("path").get<std::string>();
    if (fs::exists(p) && sha256_file(p) != v.at("sha256").get<std::string>())
      throw std::runtime_error(path.string() + ": validation results " + p.string() + " changed after the decision was made");
  }
  return d;
}

/// The held-out split may only be scored once a branch decision exists.
inline void require_test_guard(const datagen::Dataset& ds, const fs::path* decision) {
  if (ds.config.split == datagen::Split::Test && (!decision || !fs::exists(*decision)))
    throw std::runtime_error("refusing to evaluate the test split without a branch decision file; run select-branch on the validation results first");
}

}  // namespace latentpde::harness
