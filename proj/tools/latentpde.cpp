#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "latentpde/harness/run.hpp"

using namespace latentpde;
using namespace latentpde::harness;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> n_train, n_val, n_test;
  std::optional<bool> plots;
  std::string regime;
  std::string net;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "output directory (default: $LATENTPDE_OUT or ./runs)");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("-j,--workers", c.workers, "per-sample worker threads");
  cmd->add_option("--n-train", c.n_train);
  cmd->add_option("--n-val", c.n_val);
  cmd->add_option("--n-test", c.n_test);
  cmd->add_option("--regime", c.regime, "regime name");
  cmd->add_option("--net", c.net, "network size: desk | full");
  cmd->add_option("--plots", c.plots, "write PGM/SVG plots (true|false)");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (c.n_train) cfg.n_train = *c.n_train;
  if (c.n_val) cfg.n_val = *c.n_val;
  if (c.n_test) cfg.n_test = *c.n_test;
  if (c.plots) cfg.plots = *c.plots;
  if (!c.regime.empty()) cfg.regime = c.regime;
  if (!c.net.empty()) cfg.net = c.net;
  cfg.validate();
  return cfg;
}

RunLayout layout_of(const Common& c) { return {c.out.empty() ? default_output_root() : fs::path(c.out)}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LatentPDE: latent-space PDE field reconstruction from sparse observations"};
  app.require_subcommand(1);

  Common common;
  std::string split_name = "train", branch_name = "map";
  std::vector<std::string> val_paths;

  auto* gen = app.add_subcommand("gen-data", "generate a dataset split");
  auto* fit = app.add_subcommand("fit-map", "per-sample MAP latents for a split");
  auto* tenc = app.add_subcommand("train-encoder", "train the amortized encoder on the train split");
  auto* enc = app.add_subcommand("encode", "encoder latents for a split");
  auto* tdiff = app.add_subcommand("train-diffusion", "train the latent denoiser for one branch");
  auto* eval = app.add_subcommand("evaluate", "LatentPDE ensemble reconstruction and metrics");
  auto* base = app.add_subcommand("baselines", "decoded init, 3D-Var and EnKF metrics");
  auto* sel = app.add_subcommand("select-branch", "pick MAP or encoder from validation results");
  auto* run = app.add_subcommand("run", "full pipeline: data, inference, diffusion, selection, test report");
  auto* cfg = app.add_subcommand("config", "print the resolved config");

  for (auto* cmd : {gen, fit, tenc, enc, tdiff, eval, base, sel, run, cfg}) add_common(cmd, common);
  for (auto* cmd : {gen, fit, enc, eval, base})
    cmd->add_option("--split", split_name, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  for (auto* cmd : {tdiff, eval, base})
    cmd->add_option("--branch", branch_name, "map | encoder (test split uses the decision file)")->check(CLI::IsMember({"map", "encoder"}));
  sel->add_option("results", val_paths, "validation results CSVs (default: both latentpde val tables)");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig c = resolve(common);
    const RunLayout L = layout_of(common);
    const auto split = datagen::split_from_string(split_name);
    const auto branch = latent::branch_from_string(branch_name);
    auto* sub = app.get_subcommands().front();
    if (sub != cfg) write_resolved_config(c, L);
    const fs::path dec = L.decision();

    if (sub == cfg) {
      std::cout << to_json(c).dump(2) << "\n";
    } else if (sub == gen) {
      cmd_gen_data(c, L, split);
    } else if (sub == fit) {
      cmd_fit_map(c, L, split);
    } else if (sub == tenc) {
      cmd_train_encoder(c, L);
    } else if (sub == enc) {
      cmd_encode(c, L, split);
    } else if (sub == tdiff) {
      cmd_train_diffusion(c, L, branch);
    } else if (sub == eval) {
      std::cout << cmd_evaluate(c, L, split, branch, fs::exists(dec) ? &dec : nullptr).string() << "\n";
    } else if (sub == base) {
      std::cout << cmd_baselines(c, L, split, branch, fs::exists(dec) ? &dec : nullptr).string() << "\n";
    } else if (sub == sel) {
      std::vector<fs::path> paths(val_paths.begin(), val_paths.end());
      if (paths.empty())
        paths = {L.latentpde_results(latent::Branch::Map, datagen::Split::Val), L.latentpde_results(latent::Branch::Encoder, datagen::Split::Val)};
      const auto d = cmd_select_branch(L, paths);
      std::cout << "branch " << latent::to_string(d.branch) << " (val rmse map " << d.val_rmse_map << ", encoder " << d.val_rmse_encoder << ")\n";
    } else if (sub == run) {
      const auto d = run_pipeline(c, L, [](const std::string& s) { std::cerr << "[latentpde] " << s << "\n"; });
      std::cout << "branch " << latent::to_string(d.branch) << "\n";
      const auto rows = read_results(L.report());
      for (const auto& r : rows)
        if (r.instance == "mean" && (r.metric == "rmse" || r.metric == "psd_log_err"))
          std::cout << r.method << " " << r.metric << " " << r.value << "\n";
      std::cout << L.report().string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "latentpde: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
