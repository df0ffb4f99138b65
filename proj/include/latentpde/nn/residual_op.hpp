#pragma once

#include <sstream>
#include <stdexcept>
#include <vector>

#include "latentpde/decoder.hpp"
#include "latentpde/latent.hpp"
#include "latentpde/nn/tensor.hpp"

namespace latentpde::nn {

/// Per-row masked residual J(denormalize(z_b)) for normalized latents z [B, D]; returns [B]. The
/// backward pass uses the analytic adjoint gradient of each problem.
inline Tensor masked_residual(const Tensor& z, const std::vector<const MaskedResidual*>& problems,
                              const latent::LatentStats& stats) {
  require_rank(z, 2, "masked_residual");
  const int B = z.dim(0), D = z.dim(1);
  if (problems.size() != static_cast<std::size_t>(B))
    throw std::invalid_argument("masked_residual: " + std::to_string(problems.size()) + " problems for batch " + std::to_string(B));
  if (stats.mu.size() != static_cast<std::size_t>(D))
    throw std::invalid_argument("masked_residual: stats have dimension " + std::to_string(stats.mu.size()) +
                                ", latents " + std::to_string(D));
  std::vector<double> v(static_cast<std::size_t>(B));
  auto grads = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B) * D);
  for (int b = 0; b < B; ++b) {
    const std::span<const double> row(z.value().data() + static_cast<std::size_t>(b) * D, static_cast<std::size_t>(D));
    const auto raw = latent::denormalize(row, stats);
    const std::span<double> g(grads->data() + static_cast<std::size_t>(b) * D, static_cast<std::size_t>(D));
    try {
      v[b] = problems[b]->value_and_gradient(raw, g);
    } catch (const std::runtime_error& e) {
      std::ostringstream msg;
      msg << "masked_residual: batch row " << b << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
    for (int i = 0; i < D; ++i) g[i] *= stats.sigma[i];
  }
  return make_result({B}, std::move(v), {z}, [grads, B, D](Node& n) {
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < D; ++i) n.parents[0]->grad[b * D + i] += n.grad[b] * (*grads)[static_cast<std::size_t>(b) * D + i];
  });
}

}  // namespace latentpde::nn
