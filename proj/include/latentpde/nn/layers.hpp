#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "latentpde/nn/ops.hpp"
#include "latentpde/optim.hpp"
#include "latentpde/random.hpp"

namespace latentpde::nn {

/// Ordered, uniquely named parameter list of a network.
class ParamSet {
 public:
  Tensor add(const std::string& name, Tensor t) {
    for (const auto& [n, _] : items_)
      if (n == name) throw std::logic_error("ParamSet: duplicate parameter '" + name + "'");
    items_.emplace_back(name, t);
    return t;
  }
  [[nodiscard]] const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }
  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }
  [[nodiscard]] Tensor get(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    throw std::out_of_range("ParamSet: no parameter '" + name + "'");
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

inline std::vector<double> normal_values(std::size_t n, double std, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = std * standard_normal(rng);
  return v;
}

struct Linear {
  Tensor W, b;

  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
    W = ps.add(name + ".weight",
               Tensor::parameter({out, in}, normal_values(static_cast<std::size_t>(in) * out, gain / std::sqrt(in), rng)));
    b = ps.add(name + ".bias", Tensor::parameter({out}, std::vector<double>(static_cast<std::size_t>(out), 0.0)));
  }
  [[nodiscard]] Tensor operator()(const Tensor& x) const { return linear(x, W, b); }
  [[nodiscard]] int in() const { return W.dim(1); }
  [[nodiscard]] int out() const { return W.dim(0); }
};

struct Conv2d {
  Tensor W, b;
  int stride = 1;

  Conv2d() = default;
  Conv2d(ParamSet& ps, const std::string& name, int in, int out, int k, int s, Rng& rng) : stride(s) {
    const int fan_in = in * k * k;
    W = ps.add(name + ".weight", Tensor::parameter({out, in, k, k}, normal_values(static_cast<std::size_t>(fan_in) * out,
                                                                                  std::sqrt(2.0 / fan_in), rng)));
    b = ps.add(name + ".bias", Tensor::parameter({out}, std::vector<double>(static_cast<std::size_t>(out), 0.0)));
  }
  [[nodiscard]] Tensor operator()(const Tensor& x) const { return conv2d(x, W, b, stride); }
};

/// Per-channel affine of GroupNorm / LayerNorm, initialised to the identity.
struct Affine {
  Tensor gamma, beta;

  Affine() = default;
  Affine(ParamSet& ps, const std::string& name, int n) {
    gamma = ps.add(name + ".gamma", Tensor::parameter({n}, std::vector<double>(static_cast<std::size_t>(n), 1.0)));
    beta = ps.add(name + ".beta", Tensor::parameter({n}, std::vector<double>(static_cast<std::size_t>(n), 0.0)));
  }
};

/// Adam over every tensor of a ParamSet.
class Adam {
 public:
  Adam(const ParamSet& ps, optim::AdamConfig cfg = {}) : cfg_(cfg) {
    for (const auto& [_, t] : ps.items()) {
      params_.push_back(t);
      state_.emplace_back(t.size());
    }
  }
  void step(double lr = -1.0) {
    for (std::size_t i = 0; i < params_.size(); ++i)
      optim::adam_step(params_[i].value(), params_[i].grad(), state_[i], cfg_, lr);
  }
  [[nodiscard]] const optim::AdamConfig& config() const { return cfg_; }

 private:
  optim::AdamConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<optim::AdamMoments> state_;
};

/// Global L2 norm of all gradients; rescales them to at most max_norm when max_norm > 0.
inline double clip_grad_norm(ParamSet& ps, double max_norm) {
  double s = 0.0;
  for (auto& [_, t] : ps.items())
    for (double g : t.grad()) s += g * g;
  const double norm = std::sqrt(s);
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [_, t] : ps.items()) {
      Tensor tt = t;
      for (double& g : tt.grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace latentpde::nn
