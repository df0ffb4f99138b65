#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "latentpde/fft.hpp"
#include "latentpde/field.hpp"
#include "latentpde/forcing.hpp"
#include "latentpde/latent.hpp"
#include "latentpde/spectral.hpp"

namespace latentpde {

/// Decodes a raw latent into a field on `target`: theta from the sigmoid map, forcing from q,
/// the initial condition spectrally resampled, then the mode-wise transfer solve.
inline Field decode(std::span<const double> z_raw, const Field& u0, const latent::RegimeSpec& regime,
                    const latent::LatentLayout& layout, Resolution target, double* max_imag = nullptr) {
  latent::require_layout(z_raw, layout, "decode");
  require_finite(z_raw, "decode latent");
  const auto params = latent::theta_from_raw(z_raw.first(3), regime);
  const ComplexField f_hat = forcing::spectrum(z_raw.subspan(3), layout.forcing_modes, target);
  const ComplexField u0_hat = spectral::spectral_resample(fft::forward(u0), target);
  return fft::inverse_real(spectral::apply_transfer(u0_hat, f_hat, regime.family, params), max_imag);
}

/// J(z) = || M (D(z, u0) - y) ||^2 / (||M||_1 + eps), evaluated on the observation grid, with its
/// exact gradient in the raw latent through the adjoint spectral path.
class MaskedResidual {
 public:
  static constexpr double kDefaultEps = 1e-8;

  MaskedResidual(latent::RegimeSpec regime, latent::LatentLayout layout, const Field& u0, Field y, Mask mask,
                 double eps = kDefaultEps)
      : regime_(std::move(regime)), layout_(layout), y_(std::move(y)), mask_(std::move(mask)), eps_(eps) {
    require_same_grid(y_.resolution(), mask_.resolution(), "MaskedResidual");
    const Resolution res = y_.resolution();
    forcing::require_fits(layout_.forcing_modes, res);
    u0_hat_ = spectral::spectral_resample(fft::forward(u0), res);
    k_.reserve(res.cells());
    for (int i = 0; i < res.height; ++i)
      for (int j = 0; j < res.width; ++j) k_.push_back(spectral::wavevector(i, j, res));
    denom_ = mask_count(mask_) + eps_;
  }

  [[nodiscard]] Resolution resolution() const noexcept { return y_.resolution(); }
  [[nodiscard]] const latent::RegimeSpec& regime() const noexcept { return regime_; }
  [[nodiscard]] const latent::LatentLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] std::size_t dim() const noexcept { return layout_.size(); }
  [[nodiscard]] const Field& observations() const noexcept { return y_; }
  [[nodiscard]] const Mask& mask() const noexcept { return mask_; }

  [[nodiscard]] Field decode(std::span<const double> z) const {
    latent::require_layout(z, layout_, "MaskedResidual::decode");
    const auto params = latent::theta_from_raw(z.first(3), regime_);
    const ComplexField f_hat = forcing::spectrum(z.subspan(3), layout_.forcing_modes, resolution());
    ComplexField u_hat(resolution());
    for (std::size_t i = 0; i < k_.size(); ++i) {
      const auto t = spectral::transfer_jet(regime_.family, params, k_[i]);
      u_hat[i] = t.G * u0_hat_[i] + t.H * f_hat[i];
    }
    return fft::inverse_real(u_hat);
  }

  [[nodiscard]] double value(std::span<const double> z) const { return value_of(decode(z)); }

  /// Writes dJ/dz into `grad` (overwriting) and returns J.
  double value_and_gradient(std::span<const double> z, std::span<double> grad) const {
    latent::require_layout(z, layout_, "MaskedResidual::value_and_gradient");
    if (grad.size() != z.size()) throw std::invalid_argument("MaskedResidual: gradient buffer has wrong length");
    const Resolution res = resolution();
    const auto params = latent::theta_from_raw(z.first(3), regime_);
    const ComplexField f_hat = forcing::spectrum(z.subspan(3), layout_.forcing_modes, res);

    std::vector<spectral::TransferJet> jets(k_.size());
    ComplexField u_hat(res);
    for (std::size_t i = 0; i < k_.size(); ++i) {
      jets[i] = spectral::transfer_jet(regime_.family, params, k_[i]);
      u_hat[i] = jets[i].G * u0_hat_[i] + jets[i].H * f_hat[i];
    }
    const Field u = fft::inverse_real(u_hat);
    if (!std::all_of(u.storage().begin(), u.storage().end(), [](double v) { return std::isfinite(v); }))
      throw std::runtime_error("MaskedResidual: non-finite decode");

    Field g(res);
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double r = mask_[i] * (u[i] - y_[i]);
      acc += r * r;
      g[i] = 2.0 * mask_[i] * r / denom_;
    }

    // dJ = Re sum conj(gamma) dU_hat with gamma = FFT(g) / N.
    ComplexField gamma = fft::forward(g);
    const double inv_n = 1.0 / static_cast<double>(res.cells());
    for (auto& v : gamma.storage()) v *= inv_n;

    std::fill(grad.begin(), grad.end(), 0.0);
    std::array<double, 3> dtheta{};
    ComplexField gamma_f(res);
    for (std::size_t i = 0; i < k_.size(); ++i) {
      const auto& t = jets[i];
      gamma_f[i] = std::conj(t.H) * gamma[i];
      for (int j = 0; j < 3; ++j)
        dtheta[j] += (std::conj(gamma[i]) * (t.dG[j] * u0_hat_[i] + t.dH[j] * f_hat[i])).real();
    }
    const auto jac = latent::theta_jacobian(z.first(3), regime_);
    for (int j = 0; j < 3; ++j) grad[j] = dtheta[j] * jac[j];
    forcing::spectrum_adjoint(gamma_f, layout_.forcing_modes, grad.subspan(3));
    return acc / denom_;
  }

  [[nodiscard]] std::vector<double> gradient(std::span<const double> z) const {
    std::vector<double> g(z.size());
    value_and_gradient(z, g);
    return g;
  }

  [[nodiscard]] double value_of(const Field& u) const {
    require_same_grid(u.resolution(), resolution(), "MaskedResidual::value_of");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double r = mask_[i] * (u[i] - y_[i]);
      acc += r * r;
    }
    return acc / denom_;
  }

 private:
  latent::RegimeSpec regime_;
  latent::LatentLayout layout_;
  Field y_;
  Mask mask_;
  double eps_;
  double denom_ = 0.0;
  ComplexField u0_hat_;
  std::vector<spectral::Wavevector> k_;
};

}  // namespace latentpde
