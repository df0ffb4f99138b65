#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>

#include "latentpde/fft.hpp"
#include "latentpde/field.hpp"

// Truncated Fourier forcing. q holds an M_f x M_f block of complex series coefficients for each of
// two row-frequency bands:
//
//   q[band * 2 M^2 + (r * M + c) * 2 + {0: re, 1: im}]
//   band 0: ky = r        (0 .. M-1)
//   band 1: ky = r - M    (-M .. -1)
//   kx = c                (0 .. M-1)
//
// The block is the non-redundant half of a real field's spectrum, so
//
//   f(x, y) = Re sum_{ky, kx} w(kx) q(ky, kx) exp(2 pi i (kx x + ky y)),   w(0) = 1, w(kx > 0) = 2.
//
// Coefficients are grid independent, which makes decode_forcing resolution-transferable.

namespace latentpde::forcing {

using cplx = std::complex<double>;

inline std::size_t block_size(int modes) { return 4u * static_cast<std::size_t>(modes) * static_cast<std::size_t>(modes); }

inline void require_fits(int modes, Resolution res) {
  if (modes < 1) throw std::invalid_argument("forcing: retained mode count must be positive");
  if (res.height < 2 * modes || res.width < 2 * modes) {
    throw std::invalid_argument("forcing: grid " + to_string(res) + " is too small for " + std::to_string(modes) +
                                " retained modes (need at least " + std::to_string(2 * modes) + " per axis)");
  }
}

inline void require_size(std::span<const double> q, int modes) {
  if (q.size() != block_size(modes)) {
    throw std::invalid_argument("forcing: expected " + std::to_string(block_size(modes)) + " coefficients, got " +
                                std::to_string(q.size()));
  }
}

/// Visits every stored coefficient as (offset into q, ky, kx).
template <typename Fn>
void for_each_mode(int modes, Fn&& fn) {
  for (int band = 0; band < 2; ++band)
    for (int r = 0; r < modes; ++r)
      for (int c = 0; c < modes; ++c) {
        const std::size_t off = static_cast<std::size_t>(band) * 2 * modes * modes + (static_cast<std::size_t>(r) * modes + c) * 2;
        fn(off, band == 0 ? r : r - modes, c);
      }
}

/// DFT-convention spectrum (unnormalized forward transform) of the decoded forcing on `res`.
inline ComplexField spectrum(std::span<const double> q, int modes, Resolution res) {
  require_size(q, modes);
  require_fits(modes, res);
  ComplexField F(res);
  const double n = static_cast<double>(res.cells());
  for_each_mode(modes, [&](std::size_t off, int ky, int kx) {
    const cplx v{q[off], q[off + 1]};
    const double w = (kx == 0 ? 1.0 : 2.0) * 0.5 * n;
    F(fft_index(ky, res.height), fft_index(kx, res.width)) += w * v;
    F(fft_index(-ky, res.height), fft_index(-kx, res.width)) += w * std::conj(v);
  });
  return F;
}

inline Field decode_forcing(std::span<const double> q, int modes, Resolution res) {
  return fft::inverse_real(spectrum(q, modes, res));
}

/// Adjoint of `spectrum`: given gamma with dJ = Re sum conj(gamma) dF, accumulates dJ/dq into grad.
inline void spectrum_adjoint(const ComplexField& gamma, int modes, std::span<double> grad) {
  require_size(grad, modes);
  const Resolution res = gamma.resolution();
  require_fits(modes, res);
  const double n = static_cast<double>(res.cells());
  for_each_mode(modes, [&](std::size_t off, int ky, int kx) {
    const double w = (kx == 0 ? 1.0 : 2.0) * 0.5 * n;
    const cplx gp = gamma(fft_index(ky, res.height), fft_index(kx, res.width));
    const cplx gm = gamma(fft_index(-ky, res.height), fft_index(-kx, res.width));
    grad[off] += w * (gp.real() + gm.real());
    grad[off + 1] += w * (gp.imag() - gm.imag());
  });
}

}  // namespace latentpde::forcing
