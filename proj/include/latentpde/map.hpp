#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentpde/decoder.hpp"
#include "latentpde/optim.hpp"
#include "latentpde/parallel.hpp"
#include "latentpde/random.hpp"

namespace latentpde::inference {

struct MapConfig {
  int steps = 300;
  int restarts = 3;
  double lambda = 0.01;
  double lr = 0.05;
  double lr_final = 0.005;
  double init_r_std = 1.0;
  double init_q_std = 0.1;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("MapConfig: steps must be >= 1");
    if (restarts < 1) throw std::invalid_argument("MapConfig: restarts must be >= 1");
    if (lambda < 0) throw std::invalid_argument("MapConfig: lambda must be >= 0");
    if (!(lr > 0) || !(lr_final > 0)) throw std::invalid_argument("MapConfig: learning rates must be positive");
  }
};

struct RestartTrace {
  double best_objective = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();  // J at the kept iterate
  std::vector<double> running_min;  // best objective seen after each step
  bool diverged = false;
};

struct MapResult {
  std::vector<double> z;
  double residual = std::numeric_limits<double>::infinity();
  int restart = -1;
  std::vector<RestartTrace> traces;
};

/// Minimizes J(z) + lambda ||z||^2 with Adam (cosine-decayed learning rate) from cfg.restarts random
/// starts. Each restart keeps its lowest-objective iterate; among restarts the lowest masked residual J
/// wins, ties going to the lower index.
inline MapResult map_estimate(const MaskedResidual& problem, const MapConfig& cfg, Rng& rng, int workers = 1) {
  cfg.validate();
  const std::size_t d = problem.dim();
  std::vector<std::vector<double>> inits(static_cast<std::size_t>(cfg.restarts), std::vector<double>(d));
  for (auto& z : inits)
    for (std::size_t i = 0; i < d; ++i) z[i] = (i < 3 ? cfg.init_r_std : cfg.init_q_std) * standard_normal(rng);

  std::vector<std::vector<double>> best_z(inits.size());
  std::vector<RestartTrace> traces(inits.size());
  parallel_for(inits.size(), workers, [&](std::size_t r) {
    std::vector<double> z = inits[r];
    std::vector<double> g(d);
    optim::AdamMoments state(d);
    const optim::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    RestartTrace& tr = traces[r];
    tr.running_min.reserve(static_cast<std::size_t>(cfg.steps) + 1);
    auto record = [&](double J) {
      double n2 = 0.0;
      for (double v : z) n2 += v * v;
      const double obj = J + cfg.lambda * n2;
      if (obj < tr.best_objective) {
        tr.best_objective = obj;
        tr.residual = J;
        best_z[r] = z;
      }
      tr.running_min.push_back(tr.best_objective);
    };
    for (int step = 0; step < cfg.steps; ++step) {
      double J = 0.0;
      try {
        J = problem.value_and_gradient(z, g);
      } catch (const std::runtime_error&) {
        tr.diverged = true;
        return;
      }
      if (!std::isfinite(J)) {
        tr.diverged = true;
        return;
      }
      record(J);
      for (std::size_t i = 0; i < d; ++i) g[i] += 2.0 * cfg.lambda * z[i];
      optim::adam_step(z, g, state, adam, optim::cosine_lr(cfg.lr, cfg.lr_final, step, cfg.steps));
    }
    bool finite = true;
    for (double v : z) finite &= std::isfinite(v);
    if (finite) {
      const double J = problem.value(z);
      if (std::isfinite(J)) record(J);
    }
  });

  MapResult out;
  out.traces = traces;
  for (std::size_t r = 0; r < traces.size(); ++r) {
    if (best_z[r].empty()) continue;
    if (traces[r].residual < out.residual) {
      out.residual = traces[r].residual;
      out.z = best_z[r];
      out.restart = static_cast<int>(r);
    }
  }
  if (out.restart < 0) {
    std::ostringstream msg;
    msg << "map_estimate: all " << cfg.restarts << " restarts diverged";
    throw std::runtime_error(msg.str());
  }
  return out;
}

inline nlohmann::json to_json(const MapConfig& c) {
  return {{"steps", c.steps},           {"restarts", c.restarts},     {"lambda", c.lambda}, {"lr", c.lr},
          {"lr_final", c.lr_final},     {"init_r_std", c.init_r_std}, {"init_q_std", c.init_q_std}};
}

inline MapConfig map_config_from_json(const nlohmann::json& j) {
  MapConfig c;
  c.steps = j.value("steps", c.steps);
  c.restarts = j.value("restarts", c.restarts);
  c.lambda = j.value("lambda", c.lambda);
  c.lr = j.value("lr", c.lr);
  c.lr_final = j.value("lr_final", c.lr_final);
  c.init_r_std = j.value("init_r_std", c.init_r_std);
  c.init_q_std = j.value("init_q_std", c.init_q_std);
  c.validate();
  return c;
}

}  // namespace latentpde::inference
