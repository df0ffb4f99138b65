#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentpde/harness/pipeline.hpp"
#include "latentpde/harness/plots.hpp"

namespace latentpde::harness {

/// File layout of one experiment directory.
struct RunLayout {
  fs::path root;

  [[nodiscard]] fs::path config() const { return root / "config.json"; }
  [[nodiscard]] fs::path data(datagen::Split s) const { return root / "data" / (datagen::to_string(s) + ".lpds"); }
  [[nodiscard]] fs::path latents(latent::Branch b, datagen::Split s) const {
    return root / "latents" / (latent::to_string(b) + "_" + datagen::to_string(s) + ".lat");
  }
  [[nodiscard]] fs::path encoder() const { return root / "models" / "encoder.ckpt"; }
  [[nodiscard]] fs::path diffusion(latent::Branch b) const { return root / "models" / ("diffusion_" + latent::to_string(b) + ".ckpt"); }
  [[nodiscard]] fs::path latentpde_results(latent::Branch b, datagen::Split s) const {
    return root / "results" / ("latentpde_" + latent::to_string(b) + "_" + datagen::to_string(s) + ".csv");
  }
  [[nodiscard]] fs::path baseline_results(latent::Branch b, datagen::Split s) const {
    return root / "results" / ("baselines_" + latent::to_string(b) + "_" + datagen::to_string(s) + ".csv");
  }
  [[nodiscard]] fs::path report() const { return root / "results" / "test.csv"; }
  [[nodiscard]] fs::path decision() const { return root / "decision.json"; }
  [[nodiscard]] fs::path plots() const { return root / "plots"; }
};

/// LATENTPDE_OUT if set, else ./runs.
inline fs::path default_output_root() {
  if (const char* env = std::getenv("LATENTPDE_OUT"); env && *env) return env;
  return "runs";
}

inline void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline void write_resolved_config(const ExperimentConfig& c, const RunLayout& L) {
  fs::create_directories(L.root);
  std::ofstream out(L.config());
  if (!out) throw std::runtime_error("cannot write " + L.config().string());
  out << to_json(c).dump(2) << "\n";
}

inline datagen::Dataset load_checked_dataset(const fs::path& p) {
  verify_input(p);
  return datagen::load_dataset(p);
}

// ---- commands --------------------------------------------------------------------------------

inline void cmd_gen_data(const ExperimentConfig& c, const RunLayout& L, datagen::Split split) {
  const auto dc = c.dataset(split);
  const fs::path out = L.data(split);
  ensure_parent(out);
  datagen::save_dataset(datagen::build_dataset(dc, c.workers), out);
  write_manifest("gen-data", datagen::to_json(dc), {}, {out});
}

inline void cmd_fit_map(const ExperimentConfig& c, const RunLayout& L, datagen::Split split) {
  const fs::path in = L.data(split), out = L.latents(latent::Branch::Map, split);
  const auto ds = load_checked_dataset(in);
  ensure_parent(out);
  save_latents(fit_map_latents(ds, c.map, c.seed, c.workers), out);
  write_manifest("fit-map", {{"map", inference::to_json(c.map)}, {"seed", c.seed}}, {in}, {out});
}

inline void cmd_train_encoder(const ExperimentConfig& c, const RunLayout& L) {
  const fs::path in = L.data(datagen::Split::Train), out = L.encoder();
  const auto ds = load_checked_dataset(in);
  ensure_parent(out);
  const auto m = inference::train_encoder(ds, c.encoder, c.network(static_cast<int>(ds.config.layout().size())));
  inference::save_encoder(m, out, c.encoder);
  write_manifest("train-encoder", {{"encoder", inference::to_json(c.encoder)}, {"net", c.net}}, {in}, {out});
}

inline void cmd_encode(const ExperimentConfig&, const RunLayout& L, datagen::Split split) {
  const fs::path ckpt = L.encoder(), in = L.data(split), out = L.latents(latent::Branch::Encoder, split);
  verify_input(ckpt);
  const auto ds = load_checked_dataset(in);
  ensure_parent(out);
  save_latents(encoder_latents(inference::load_encoder(ckpt), ds), out);
  write_manifest("encode", nlohmann::json::object(), {ckpt, in}, {out});
}

inline void cmd_train_diffusion(const ExperimentConfig& c, const RunLayout& L, latent::Branch b) {
  const fs::path lat = L.latents(b, datagen::Split::Train), in = L.data(datagen::Split::Train), out = L.diffusion(b);
  verify_input(lat);
  const auto ds = load_checked_dataset(in);
  const auto z = load_latents(lat);
  if (z.branch != b) throw std::runtime_error(lat.string() + ": holds " + latent::to_string(z.branch) + " latents, expected " + latent::to_string(b));
  ensure_parent(out);
  const auto m = diffusion::train_denoiser(z.latents, ds, b, c.diffusion, c.network(static_cast<int>(ds.config.layout().size())));
  diffusion::save_model(m, out, c.diffusion);
  write_manifest("train-diffusion", {{"branch", latent::to_string(b)}, {"diffusion", diffusion::to_json(c.diffusion)}, {"net", c.net}},
                 {lat, in}, {out});
}

inline void write_instance_plots(const datagen::Dataset& ds, const EnsembleArtifacts& art, const fs::path& dir, const std::string& tag,
                                 std::size_t count = 3) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < std::min(count, art.mean.size()); ++i) {
    const auto& s = ds.samples[i];
    const std::string stem = tag + "_" + std::to_string(i);
    write_pgm(s.u_out_hr, dir / (stem + "_truth.pgm"));
    write_pgm(art.mean[i], dir / (stem + "_mean.pgm"));
    write_pgm(art.stddev[i], dir / (stem + "_std.pgm"));
    Field err = art.mean[i] - s.u_out_hr;
    for (auto& v : err.storage()) v = std::abs(v);
    write_pgm(err, dir / (stem + "_abserr.pgm"));
    write_psd_svg({{"truth", metrics::radial_psd(s.u_out_hr)}, {"latentpde", metrics::radial_psd(art.mean[i])}},
                  dir / (stem + "_psd.svg"));
  }
}

/// Scores LatentPDE on `split`. On the test split the branch comes from the decision file.
inline fs::path cmd_evaluate(const ExperimentConfig& c, const RunLayout& L, datagen::Split split, latent::Branch b,
                             const fs::path* decision = nullptr) {
  const fs::path in = L.data(split);
  const auto ds = load_checked_dataset(in);
  require_test_guard(ds, decision);
  std::vector<fs::path> inputs{in};
  if (split == datagen::Split::Test) {
    b = read_decision(*decision).branch;
    inputs.push_back(*decision);
  }
  const fs::path lat = L.latents(b, split), ckpt = L.diffusion(b), out = L.latentpde_results(b, split);
  verify_input(lat);
  verify_input(ckpt);
  inputs.push_back(lat);
  inputs.push_back(ckpt);
  const auto init = load_latents(lat);
  const auto m = diffusion::load_model(ckpt);
  EnsembleArtifacts art;
  const auto rows = evaluate_latentpde(ds, init, m, c.sampler, c.seed, c.workers, c.plots ? &art : nullptr);
  ensure_parent(out);
  write_results(out, rows);
  write_manifest("evaluate", {{"split", datagen::to_string(split)}, {"branch", latent::to_string(b)}, {"sampler", diffusion::to_json(c.sampler)},
                              {"seed", c.seed}},
                 inputs, {out});
  if (c.plots) write_instance_plots(ds, art, L.plots(), "latentpde_" + latent::to_string(b) + "_" + datagen::to_string(split));
  return out;
}

/// Decoded initialization, 3D-Var and EnKF on the same branch latents LatentPDE starts from.
inline fs::path cmd_baselines(const ExperimentConfig& c, const RunLayout& L, datagen::Split split, latent::Branch b,
                              const fs::path* decision = nullptr) {
  const fs::path in = L.data(split);
  const auto ds = load_checked_dataset(in);
  std::vector<fs::path> inputs{in};
  if (split == datagen::Split::Test && decision) {
    b = read_decision(*decision).branch;
    inputs.push_back(*decision);
  }
  const fs::path lat = L.latents(b, split), out = L.baseline_results(b, split);
  verify_input(lat);
  inputs.push_back(lat);
  const auto rows = evaluate_baselines(ds, load_latents(lat), c.var, c.enkf, c.seed, c.workers);
  ensure_parent(out);
  write_results(out, rows);
  write_manifest("baselines", {{"split", datagen::to_string(split)}, {"branch", latent::to_string(b)}, {"var", da::to_json(c.var)},
                               {"enkf", da::to_json(c.enkf)}, {"seed", c.seed}},
                 inputs, {out});
  return out;
}

inline BranchDecision cmd_select_branch(const RunLayout& L, const std::vector<fs::path>& val_results) {
  std::vector<ResultRow> rows;
  for (const auto& p : val_results) {
    verify_input(p);
    for (auto& r : read_results(p))
      if (r.instance != "mean") rows.push_back(std::move(r));
  }
  const auto d = select_branch(rows);
  fs::create_directories(L.root);
  write_decision(d, val_results, L.decision());
  write_manifest("select-branch", nlohmann::json::object(), val_results, {L.decision()});
  return d;
}

/// Concatenates per-instance rows of several tables and re-aggregates.
inline void merge_results(const std::vector<fs::path>& parts, const fs::path& out) {
  std::vector<ResultRow> rows;
  for (const auto& p : parts) {
    verify_input(p);
    for (auto& r : read_results(p))
      if (r.instance != "mean") rows.push_back(std::move(r));
  }
  write_results(out, rows);
  write_manifest("report", nlohmann::json::object(), parts, {out});
}

using Progress = std::function<void(const std::string&)>;

/// data -> MAP / encoder -> diffusion -> validation -> branch decision -> test evaluation + baselines.
inline BranchDecision run_pipeline(const ExperimentConfig& c, const RunLayout& L, const Progress& log = {}) {
  using datagen::Split;
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  c.validate();
  write_resolved_config(c, L);
  const Split splits[] = {Split::Train, Split::Val, Split::Test};
  for (auto s : splits) {
    note("gen-data " + datagen::to_string(s));
    cmd_gen_data(c, L, s);
  }
  for (auto s : splits) {
    note("fit-map " + datagen::to_string(s));
    cmd_fit_map(c, L, s);
  }
  note("train-encoder");
  cmd_train_encoder(c, L);
  for (auto s : splits) cmd_encode(c, L, s);
  std::vector<fs::path> val;
  for (auto b : {latent::Branch::Map, latent::Branch::Encoder}) {
    note("train-diffusion " + latent::to_string(b));
    cmd_train_diffusion(c, L, b);
    note("evaluate val " + latent::to_string(b));
    val.push_back(cmd_evaluate(c, L, Split::Val, b));
  }
  const auto d = cmd_select_branch(L, val);
  note("branch " + latent::to_string(d.branch));
  const fs::path dec = L.decision();
  note("evaluate test");
  const auto a = cmd_evaluate(c, L, Split::Test, d.branch, &dec);
  note("baselines test");
  const auto b = cmd_baselines(c, L, Split::Test, d.branch, &dec);
  merge_results({a, b}, L.report());
  return d;
}

}  // namespace latentpde::harness
