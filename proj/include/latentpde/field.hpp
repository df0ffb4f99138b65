#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentpde {

/// Grid size of a periodic field on the unit square. Rows run along y, columns along x.
struct Resolution {
  int height = 0;
  int width = 0;

  [[nodiscard]] constexpr std::size_t cells() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend constexpr bool operator==(const Resolution&, const Resolution&) = default;
};

inline std::string to_string(Resolution r) {
  return std::to_string(r.height) + "x" + std::to_string(r.width);
}

inline void require_valid(Resolution r, const char* what) {
  if (r.height <= 0 || r.width <= 0) {
    throw std::invalid_argument(std::string(what) + ": resolution must be positive, got " + to_string(r));
  }
}

template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(Resolution res, T fill = T{}) : res_(res), data_(res.cells(), fill) {
    require_valid(res, "Grid");
  }
  Grid(Resolution res, std::vector<T> values) : res_(res), data_(std::move(values)) {
    require_valid(res, "Grid");
    if (data_.size() != res.cells()) {
      throw std::invalid_argument("Grid: " + std::to_string(data_.size()) + " values for a " +
                                  to_string(res) + " grid");
    }
  }

  [[nodiscard]] Resolution resolution() const noexcept { return res_; }
  [[nodiscard]] int height() const noexcept { return res_.height; }
  [[nodiscard]] int width() const noexcept { return res_.width; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  [[nodiscard]] std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(res_.width) + static_cast<std::size_t>(col);
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Resolution res_{};
  std::vector<T> data_;
};

using Field = Grid<double>;
using ComplexField = Grid<std::complex<double>>;
/// Binary observation mask stored as 0.0 / 1.0 so it composes with field arithmetic.
using Mask = Grid<double>;

inline void require_same_grid(Resolution a, Resolution b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": grid mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

inline double mean(const Field& f) {
  return std::accumulate(f.storage().begin(), f.storage().end(), 0.0) / static_cast<double>(f.size());
}

/// Population standard deviation.
inline double stddev(const Field& f) {
  const double m = mean(f);
  double acc = 0.0;
  for (double x : f.storage()) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(f.size()));
}

inline Field operator+(const Field& a, const Field& b) {
  require_same_grid(a.resolution(), b.resolution(), "Field +");
  Field out(a.resolution());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Field operator-(const Field& a, const Field& b) {
  require_same_grid(a.resolution(), b.resolution(), "Field -");
  Field out(a.resolution());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Field operator*(double s, const Field& a) {
  Field out(a.resolution());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

inline Field hadamard(const Field& a, const Field& b) {
  require_same_grid(a.resolution(), b.resolution(), "hadamard");
  Field out(a.resolution());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline double dot(const Field& a, const Field& b) {
  require_same_grid(a.resolution(), b.resolution(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(const Field& a) { return std::sqrt(dot(a, a)); }

/// Non-overlapping p x p block average.
inline Field avg_pool(const Field& f, int p) {
  if (p <= 0 || f.height() % p != 0 || f.width() % p != 0) {
    throw std::invalid_argument("avg_pool: factor " + std::to_string(p) + " does not divide " +
                                to_string(f.resolution()));
  }
  Field out(Resolution{f.height() / p, f.width() / p});
  const double inv = 1.0 / static_cast<double>(p * p);
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      double acc = 0.0;
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) acc += f(i * p + a, j * p + b);
      out(i, j) = acc * inv;
    }
  }
  return out;
}

/// Adjoint of avg_pool: spreads each coarse value / p^2 over its block.
inline Field avg_pool_adjoint(const Field& coarse, int p) {
  Field out(Resolution{coarse.height() * p, coarse.width() * p});
  const double inv = 1.0 / static_cast<double>(p * p);
  for (int i = 0; i < out.height(); ++i)
    for (int j = 0; j < out.width(); ++j) out(i, j) = coarse(i / p, j / p) * inv;
  return out;
}

/// Each coarse cell replicated over its p x p block.
inline Field upsample_nearest(const Field& coarse, int p) {
  Field out(Resolution{coarse.height() * p, coarse.width() * p});
  for (int i = 0; i < out.height(); ++i)
    for (int j = 0; j < out.width(); ++j) out(i, j) = coarse(i / p, j / p);
  return out;
}

/// Periodic bilinear interpolation between cell centres.
inline Field bilinear_upsample(const Field& coarse, int p) {
  const int h = coarse.height();
  const int w = coarse.width();
  Field out(Resolution{h * p, w * p});
  auto wrap = [](int i, int n) { return ((i % n) + n) % n; };
  for (int i = 0; i < out.height(); ++i) {
    const double y = (i + 0.5) / p - 0.5;
    const int y0 = static_cast<int>(std::floor(y));
    const double ty = y - y0;
    for (int j = 0; j < out.width(); ++j) {
      const double x = (j + 0.5) / p - 0.5;
      const int x0 = static_cast<int>(std::floor(x));
      const double tx = x - x0;
      const double v00 = coarse(wrap(y0, h), wrap(x0, w));
      const double v01 = coarse(wrap(y0, h), wrap(x0 + 1, w));
      const double v10 = coarse(wrap(y0 + 1, h), wrap(x0, w));
      const double v11 = coarse(wrap(y0 + 1, h), wrap(x0 + 1, w));
      out(i, j) = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  }
  return out;
}

inline double mask_count(const Mask& m) {
  return std::accumulate(m.storage().begin(), m.storage().end(), 0.0);
}

/// Signed FFT frequency of index i on an axis of length n; the Nyquist bin maps to +n/2.
constexpr int fft_frequency(int i, int n) noexcept { return i <= n / 2 ? i : i - n; }

/// Index of signed frequency f on an axis of length n.
constexpr int fft_index(int f, int n) noexcept { return ((f % n) + n) % n; }

}  // namespace latentpde
