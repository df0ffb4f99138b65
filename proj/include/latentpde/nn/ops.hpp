#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentpde/nn/tensor.hpp"

namespace latentpde::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

// ---- elementwise --------------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_shape(b, a.shape(), "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_shape(b, a.shape(), "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = n.parents[k];
      if (!p->requires_grad) continue;
      const double s = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += s * n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_shape(b, a.shape(), "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += n.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.value());
  for (auto& x : v) x *= s;
  return make_result(a.shape(), std::move(v), {a}, [s](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += s * n.grad[i];
  });
}

/// Multiplies row b (first axis) of x by c[b].
inline Tensor scale_rows(const Tensor& x, std::vector<double> c) {
  if (x.rank() < 1 || static_cast<std::size_t>(x.dim(0)) != c.size())
    throw std::invalid_argument("scale_rows: " + std::to_string(c.size()) + " coefficients for shape " + to_string(x.shape()));
  const std::size_t inner = x.size() / c.size();
  std::vector<double> v(x.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c[i / inner];
  return make_result(x.shape(), std::move(v), {x}, [c = std::move(c), inner](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += c[i / inner] * n.grad[i];
  });
}

inline Tensor gelu(const Tensor& x) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double u = x.value()[i];
    v[i] = 0.5 * u * (1.0 + std::erf(u / std::numbers::sqrt2));
  }
  return make_result(x.shape(), std::move(v), {x}, [](Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double u = p.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(u / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
      p.grad[i] += n.grad[i] * (cdf + u * pdf);
    }
  });
}

// ---- reductions and losses ----------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  return make_result({1}, {s}, {x}, [](Node& n) {
    for (auto& g : n.parents[0]->grad) g += n.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Mean squared difference over all entries.
inline Tensor mse(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return mean(mul(d, d));
}

// ---- dense layers -------------------------------------------------------------------------------

/// y = x W^T + b with x [B, in], W [out, in], b [out].
inline Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(W, 2, "linear weight");
  const int B = x.dim(0), in = x.dim(1), out = W.dim(0);
  if (W.dim(1) != in)
    throw std::invalid_argument("linear: input " + to_string(x.shape()) + " vs weight " + to_string(W.shape()));
  require_shape(b, {out}, "linear bias");
  std::vector<double> v(static_cast<std::size_t>(B) * out);
  MatMap Y(v.data(), B, out);
  Y.noalias() = CMatMap(x.value().data(), B, in) * CMatMap(W.value().data(), out, in).transpose();
  Y.rowwise() += CVecMap(b.value().data(), out).transpose();
  return make_result({B, out}, std::move(v), {x, W, b}, [B, in, out](Node& n) {
    auto& px = *n.parents[0];
    auto& pW = *n.parents[1];
    auto& pb = *n.parents[2];
    CMatMap dY(n.grad.data(), B, out);
    if (px.requires_grad) MatMap(px.grad.data(), B, in).noalias() += dY * CMatMap(pW.value.data(), out, in);
    if (pW.requires_grad) MatMap(pW.grad.data(), out, in).noalias() += dY.transpose() * CMatMap(px.value.data(), B, in);
    if (pb.requires_grad) VecMap(pb.grad.data(), out) += dY.colwise().sum().transpose();
  });
}

/// 2-D convolution with circular padding k/2, x [B, C, H, W], weight [O, C, k, k], bias [O].
/// Output is [B, O, H/s, W/s]; output cell (i, j) is centred on input cell (i s, j s).
inline Tensor conv2d(const Tensor& x, const Tensor& Wt, const Tensor& b, int stride = 1) {
  require_rank(x, 4, "conv2d input");
  require_rank(Wt, 4, "conv2d weight");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = Wt.dim(0), k = Wt.dim(2);
  if (Wt.dim(1) != C || Wt.dim(3) != k)
    throw std::invalid_argument("conv2d: input " + to_string(x.shape()) + " vs weight " + to_string(Wt.shape()));
  require_shape(b, {O}, "conv2d bias");
  if (stride < 1 || H % stride != 0 || W % stride != 0)
    throw std::invalid_argument("conv2d: stride " + std::to_string(stride) + " does not divide " + to_string(x.shape()));
  const int Ho = H / stride, Wo = W / stride, P = Ho * Wo, K = C * k * k, r = k / 2;

  // Source index of every (patch row, output cell) pair, shared across the batch.
  auto index = std::make_shared<std::vector<int>>(static_cast<std::size_t>(K) * P);
  for (int c = 0; c < C; ++c)
    for (int di = 0; di < k; ++di)
      for (int dj = 0; dj < k; ++dj) {
        const int row = (c * k + di) * k + dj;
        for (int i = 0; i < Ho; ++i)
          for (int j = 0; j < Wo; ++j) {
            const int si = ((i * stride + di - r) % H + H) % H;
            const int sj = ((j * stride + dj - r) % W + W) % W;
            (*index)[static_cast<std::size_t>(row) * P + i * Wo + j] = (c * H + si) * W + sj;
          }
      }

  const std::size_t in_stride = static_cast<std::size_t>(C) * H * W, out_stride = static_cast<std::size_t>(O) * P;
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B) * K * P);
  std::vector<double> v(static_cast<std::size_t>(B) * out_stride);
  CMatMap Wm(Wt.value().data(), O, K);
  for (int bi = 0; bi < B; ++bi) {
    const double* src = x.value().data() + bi * in_stride;
    double* col = cols->data() + static_cast<std::size_t>(bi) * K * P;
    for (std::size_t e = 0; e < index->size(); ++e) col[e] = src[(*index)[e]];
    MatMap Y(v.data() + bi * out_stride, O, P);
    Y.noalias() = Wm * CMatMap(col, K, P);
    Y.colwise() += CVecMap(b.value().data(), O);
  }
  return make_result({B, O, Ho, Wo}, std::move(v), {x, Wt, b},
                     [=](Node& n) {
                       auto& px = *n.parents[0];
                       auto& pW = *n.parents[1];
                       auto& pb = *n.parents[2];
                       CMatMap Wm(pW.value.data(), O, K);
                       RowMat dcol(K, P);
                       for (int bi = 0; bi < B; ++bi) {
                         CMatMap dY(n.grad.data() + bi * out_stride, O, P);
                         const double* col = cols->data() + static_cast<std::size_t>(bi) * K * P;
                         if (pW.requires_grad) MatMap(pW.grad.data(), O, K).noalias() += dY * CMatMap(col, K, P).transpose();
                         if (pb.requires_grad) VecMap(pb.grad.data(), O) += dY.rowwise().sum();
                         if (px.requires_grad) {
                           dcol.noalias() = Wm.transpose() * dY;
                           double* dst = px.grad.data() + bi * in_stride;
                           const double* dc = dcol.data();
                           for (std::size_t e = 0; e < index->size(); ++e) dst[(*index)[e]] += dc[e];
                         }
                       }
                     });
}

// ---- normalization ------------------------------------------------------------------------------

namespace detail {

// Normalizes `count` contiguous groups of `len` values; the affine parameter index of element e in a
// group is chan(g, e). Shared by group_norm and layer_norm.
template <typename ChanFn>
Tensor normalize_groups(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t count, std::size_t len,
                        ChanFn chan, double eps) {
  std::vector<double> v(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv = std::make_shared<std::vector<double>>(count);
  for (std::size_t g = 0; g < count; ++g) {
    const double* xs = x.value().data() + g * len;
    double m = 0.0;
    for (std::size_t e = 0; e < len; ++e) m += xs[e];
    m /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t e = 0; e < len; ++e) var += (xs[e] - m) * (xs[e] - m);
    var /= static_cast<double>(len);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv)[g] = is;
    for (std::size_t e = 0; e < len; ++e) {
      const double h = (xs[e] - m) * is;
      (*xhat)[g * len + e] = h;
      const std::size_t c = chan(g, e);
      v[g * len + e] = h * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_result(x.shape(), std::move(v), {x, gamma, beta}, [=](Node& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    auto& pb = *n.parents[2];
    for (std::size_t g = 0; g < count; ++g) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t e = 0; e < len; ++e) {
        const std::size_t i = g * len + e, c = chan(g, e);
        const double dy = n.grad[i];
        if (pg.requires_grad) pg.grad[c] += dy * (*xhat)[i];
        if (pb.requires_grad) pb.grad[c] += dy;
        const double dh = dy * pg.value[c];
        s1 += dh;
        s2 += dh * (*xhat)[i];
      }
      if (!px.requires_grad) continue;
      s1 /= static_cast<double>(len);
      s2 /= static_cast<double>(len);
      for (std::size_t e = 0; e < len; ++e) {
        const std::size_t i = g * len + e;
        const double dh = n.grad[i] * pg.value[chan(g, e)];
        px.grad[i] += (*inv)[g] * (dh - s1 - (*xhat)[i] * s2);
      }
    }
  });
}

}  // namespace detail

/// GroupNorm over [B, C, ...] with per-channel affine gamma, beta [C].
inline Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, double eps = 1e-5) {
  if (x.rank() < 2) throw std::invalid_argument("group_norm: need [B, C, ...], got " + to_string(x.shape()));
  const int B = x.dim(0), C = x.dim(1);
  if (groups < 1 || C % groups != 0)
    throw std::invalid_argument("group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(C) + " channels");
  require_shape(gamma, {C}, "group_norm gamma");
  require_shape(beta, {C}, "group_norm beta");
  const std::size_t spatial = x.size() / (static_cast<std::size_t>(B) * C);
  const std::size_t per = static_cast<std::size_t>(C / groups);
  const std::size_t len = per * spatial;
  return detail::normalize_groups(
      x, gamma, beta, static_cast<std::size_t>(B) * groups, len,
      [=](std::size_t g, std::size_t e) { return (g % static_cast<std::size_t>(groups)) * per + e / spatial; }, eps);
}

/// LayerNorm over the feature axis of [B, F].
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  require_rank(x, 2, "layer_norm");
  const int B = x.dim(0), F = x.dim(1);
  require_shape(gamma, {F}, "layer_norm gamma");
  require_shape(beta, {F}, "layer_norm beta");
  return detail::normalize_groups(x, gamma, beta, static_cast<std::size_t>(B), static_cast<std::size_t>(F),
                                  [](std::size_t, std::size_t e) { return e; }, eps);
}

// ---- pooling and reshaping ----------------------------------------------------------------------

/// [B, C, H, W] -> [B, C].
inline Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int B = x.dim(0), C = x.dim(1);
  const std::size_t S = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<double> v(static_cast<std::size_t>(B) * C);
  for (std::size_t g = 0; g < v.size(); ++g) {
    double s = 0.0;
    for (std::size_t e = 0; e < S; ++e) s += x.value()[g * S + e];
    v[g] = s / static_cast<double>(S);
  }
  return make_result({B, C}, std::move(v), {x}, [S](Node& n) {
    for (std::size_t g = 0; g < n.grad.size(); ++g)
      for (std::size_t e = 0; e < S; ++e) n.parents[0]->grad[g * S + e] += n.grad[g] / static_cast<double>(S);
  });
}

/// Non-overlapping p x p average pooling of [B, C, H, W].
inline Tensor avg_pool(const Tensor& x, int p) {
  require_rank(x, 4, "avg_pool");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (p < 1 || H % p != 0 || W % p != 0)
    throw std::invalid_argument("avg_pool: factor " + std::to_string(p) + " does not divide " + to_string(x.shape()));
  const int Ho = H / p, Wo = W / p;
  const double w = 1.0 / (p * p);
  std::vector<double> v(static_cast<std::size_t>(B) * C * Ho * Wo, 0.0);
  for (int bc = 0; bc < B * C; ++bc)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        v[(static_cast<std::size_t>(bc) * Ho + i / p) * Wo + j / p] += w * x.value()[(static_cast<std::size_t>(bc) * H + i) * W + j];
  return make_result({B, C, Ho, Wo}, std::move(v), {x}, [=](Node& n) {
    for (int bc = 0; bc < B * C; ++bc)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          n.parents[0]->grad[(static_cast<std::size_t>(bc) * H + i) * W + j] +=
              w * n.grad[(static_cast<std::size_t>(bc) * Ho + i / p) * Wo + j / p];
  });
}

/// Concatenation along axis 1; all other axes must agree.
inline Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  Shape shape = xs[0].shape();
  if (shape.size() < 2) throw std::invalid_argument("concat: need rank >= 2, got " + to_string(shape));
  const int B = shape[0];
  std::vector<std::size_t> widths;
  int total = 0;
  for (const auto& t : xs) {
    Shape s = t.shape();
    if (s.size() != shape.size() || s[0] != B || !std::equal(s.begin() + 2, s.end(), shape.begin() + 2))
      throw std::invalid_argument("concat: shape " + to_string(s) + " incompatible with " + to_string(shape));
    widths.push_back(t.size() / static_cast<std::size_t>(B));
    total += s[1];
  }
  shape[1] = total;
  std::size_t row = 0;
  for (auto w : widths) row += w;
  std::vector<double> v(row * B);
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (int b = 0; b < B; ++b)
      std::copy_n(xs[k].value().data() + b * widths[k], widths[k], v.data() + b * row + off);
    off += widths[k];
  }
  return make_result(shape, std::move(v), xs, [widths, row, B](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = *n.parents[k];
      if (p.requires_grad)
        for (int b = 0; b < B; ++b)
          for (std::size_t e = 0; e < widths[k]; ++e) p.grad[b * widths[k] + e] += n.grad[b * row + off + e];
      off += widths[k];
    }
  });
}

/// Columns [start, start + len) of a [B, F] tensor.
inline Tensor slice_cols(const Tensor& x, int start, int len) {
  require_rank(x, 2, "slice_cols");
  const int B = x.dim(0), F = x.dim(1);
  if (start < 0 || len < 0 || start + len > F)
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of range for " + to_string(x.shape()));
  std::vector<double> v(static_cast<std::size_t>(B) * len);
  for (int b = 0; b < B; ++b)
    for (int e = 0; e < len; ++e) v[b * len + e] = x.value()[b * F + start + e];
  return make_result({B, len}, std::move(v), {x}, [=](Node& n) {
    for (int b = 0; b < B; ++b)
      for (int e = 0; e < len; ++e) n.parents[0]->grad[b * F + start + e] += n.grad[b * len + e];
  });
}

/// Row b of the result is x[b] where keep[b], else the shared row `fill` [F].
inline Tensor select_rows(const Tensor& x, const Tensor& fill, const std::vector<bool>& keep) {
  require_rank(x, 2, "select_rows");
  const int B = x.dim(0), F = x.dim(1);
  require_shape(fill, {F}, "select_rows fill");
  if (keep.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("select_rows: keep has wrong length");
  std::vector<double> v(x.size());
  for (int b = 0; b < B; ++b)
    for (int e = 0; e < F; ++e) v[b * F + e] = keep[b] ? x.value()[b * F + e] : fill.value()[e];
  return make_result({B, F}, std::move(v), {x, fill}, [keep, B, F](Node& n) {
    auto& px = *n.parents[0];
    auto& pf = *n.parents[1];
    for (int b = 0; b < B; ++b)
      for (int e = 0; e < F; ++e) {
        if (keep[b] && px.requires_grad) px.grad[b * F + e] += n.grad[b * F + e];
        if (!keep[b] && pf.requires_grad) pf.grad[e] += n.grad[b * F + e];
      }
  });
}

// ---- conditioning -------------------------------------------------------------------------------

/// FiLM: scale * x + shift, elementwise over [B, F].
inline Tensor film_modulate(const Tensor& x, const Tensor& scale_t, const Tensor& shift) {
  require_shape(scale_t, x.shape(), "film_modulate scale");
  require_shape(shift, x.shape(), "film_modulate shift");
  return add(mul(scale_t, x), shift);
}

/// Sinusoidal embedding of t [B] (times `t_scale`) into [B, dim]: sin half then cos half.
inline Tensor sinusoidal_time_embed(const Tensor& t, int dim, double t_scale = 1000.0) {
  require_rank(t, 1, "sinusoidal_time_embed");
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_time_embed: dim must be even and >= 2");
  const int B = t.dim(0), half = dim / 2;
  std::vector<double> freq(static_cast<std::size_t>(half));
  for (int i = 0; i < half; ++i) freq[i] = t_scale * std::exp(-std::log(10000.0) * i / half);
  std::vector<double> v(static_cast<std::size_t>(B) * dim);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < half; ++i) {
      v[b * dim + i] = std::sin(freq[i] * t.value()[b]);
      v[b * dim + half + i] = std::cos(freq[i] * t.value()[b]);
    }
  return make_result({B, dim}, std::move(v), {t}, [freq, B, dim, half](Node& n) {
    auto& p = *n.parents[0];
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < half; ++i) {
        const double a = freq[i] * p.value[b];
        p.grad[b] += freq[i] * (n.grad[b * dim + i] * std::cos(a) - n.grad[b * dim + half + i] * std::sin(a));
      }
  });
}

}  // namespace latentpde::nn
