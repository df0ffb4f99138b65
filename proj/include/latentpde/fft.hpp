#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <utility>

#include "latentpde/field.hpp"

// Thin FFTW wrapper. Forward transforms are unnormalized; inverse transforms carry the 1/(HW) factor.

namespace latentpde::fft {

namespace detail {

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(Resolution res, int sign) {
    const std::lock_guard lock(mutex_);
    auto key = std::make_tuple(res.height, res.width, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    // Scratch arrays are only used for planning; execution goes through the new-array interface.
    ComplexField scratch_in(res), scratch_out(res);
    fftw_plan plan = fftw_plan_dft_2d(res.height, res.width, reinterpret_cast<fftw_complex*>(scratch_in.data()),
                                      reinterpret_cast<fftw_complex*>(scratch_out.data()), sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void execute(const ComplexField& in, ComplexField& out, int sign) {
  fftw_plan plan = PlanCache::instance().get(in.resolution(), sign);
  // FFTW does not write to the input of an out-of-place complex transform.
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace detail

inline ComplexField forward(const ComplexField& in) {
  ComplexField out(in.resolution());
  detail::execute(in, out, FFTW_FORWARD);
  return out;
}

inline ComplexField forward(const Field& in) {
  ComplexField tmp(in.resolution());
  for (std::size_t i = 0; i < in.size(); ++i) tmp[i] = in[i];
  return forward(tmp);
}

inline ComplexField inverse(const ComplexField& in) {
  ComplexField out(in.resolution());
  detail::execute(in, out, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(in.size());
  for (auto& v : out.storage()) v *= scale;
  return out;
}

/// Inverse transform of a (nominally Hermitian) spectrum. Returns the real part and reports the
/// largest discarded imaginary component through `max_imag` when requested.
inline Field inverse_real(const ComplexField& in, double* max_imag = nullptr) {
  const ComplexField c = inverse(in);
  Field out(in.resolution());
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i] = c[i].real();
    worst = std::max(worst, std::abs(c[i].imag()));
  }
  if (max_imag != nullptr) *max_imag = worst;
  return out;
}

}  // namespace latentpde::fft
