#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <vector>

#include "laax/autograd.hpp"

namespace laax::ag {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

/// C[M,N] (+)= op(A) op(B), row-major, op = optional transpose.
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             K = static_cast<Eigen::Index>(k);
  CMapMat A(a, trans_a ? K : M, trans_a ? M : K);
  CMapMat B(b, trans_b ? N : K, trans_b ? K : N);
  MapMat C(c, M, N);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) C.noalias() += A * B;
  else if (trans_a && !trans_b) C.noalias() += A.transpose() * B;
  else if (!trans_a && trans_b) C.noalias() += A * B.transpose();
  else C.noalias() += A.transpose() * B.transpose();
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

struct ConvGeom {
  std::size_t n, c, h, w, k, stride, pad, oh, ow;
};

/// Batched im2col: col[(c*k+ki)*k+kj, b*oh*ow + y*ow + x].
inline void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t plane = g.oh * g.ow;
  const std::size_t cols = g.n * plane;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + ((c * g.k + ki) * g.k + kj) * cols;
        for (std::size_t b = 0; b < g.n; ++b) {
          const double* src = x + (b * g.c + c) * g.h * g.w;
          double* dst = row + b * plane;
          for (std::size_t y = 0; y < g.oh; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill(dst + y * g.ow, dst + (y + 1) * g.ow, 0.0);
              continue;
            }
            for (std::size_t xo = 0; xo < g.ow; ++xo) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(xo * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              dst[y * g.ow + xo] =
                  (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[iy * g.w + ix];
            }
          }
        }
      }
}

/// Adjoint of im2col: scatter-add columns back into x.
inline void col2im(const double* col, const ConvGeom& g, double* x) {
  const std::size_t plane = g.oh * g.ow;
  const std::size_t cols = g.n * plane;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((c * g.k + ki) * g.k + kj) * cols;
        for (std::size_t b = 0; b < g.n; ++b) {
          double* dst = x + (b * g.c + c) * g.h * g.w;
          const double* src = row + b * plane;
          for (std::size_t y = 0; y < g.oh; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t xo = 0; xo < g.ow; ++xo) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(xo * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[iy * g.w + ix] += src[y * g.ow + xo];
            }
          }
        }
      }
}

/// [O, N*P] <-> [N, O, P] reorderings used around the batched GEMMs.
inline void channel_major_to_batch(const double* src, std::size_t n, std::size_t o, std::size_t p, double* dst) {
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(src + oc * n * p + b * p, p, dst + (b * o + oc) * p);
}
inline void batch_to_channel_major(const double* src, std::size_t n, std::size_t o, std::size_t p, double* dst) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      std::copy_n(src + (b * o + oc) * p, p, dst + oc * n * p + b * p);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  Var out = Var::result(a.value() + b.value(), {&a, &b});
  if (out.needs_backward())
    out.set_backward([](Node& self) {
      if (wants(self, 0)) self.input(0).grad_buffer() += self.grad;
      if (wants(self, 1)) self.input(1).grad_buffer() += self.grad;
    });
  return out;
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  Var out = Var::result(a.value() - b.value(), {&a, &b});
  if (out.needs_backward())
    out.set_backward([](Node& self) {
      if (wants(self, 0)) self.input(0).grad_buffer() += self.grad;
      if (wants(self, 1)) self.input(1).grad_buffer() -= self.grad;
    });
  return out;
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor v(a.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] * b.value()[i];
  Var out = Var::result(std::move(v), {&a, &b});
  if (out.needs_backward())
    out.set_backward([](Node& self) {
      const Tensor& av = self.input(0).value;
      const Tensor& bv = self.input(1).value;
      if (wants(self, 0)) {
        Tensor& g = self.input(0).grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
      }
      if (wants(self, 1)) {
        Tensor& g = self.input(1).grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
      }
    });
  return out;
}

/// a * s + t, elementwise with scalars.
inline Var affine(const Var& a, double s, double t = 0.0) {
  Tensor v(a.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] * s + t;
  Var out = Var::result(std::move(v), {&a});
  if (out.needs_backward())
    out.set_backward([s](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
    });
  return out;
}

inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

namespace detail {

/// Unary elementwise op given f(x) and f'(x, f(x)).
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Tensor v(a.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = f(a.value()[i]);
  Var out = Var::result(std::move(v), {&a});
  if (out.needs_backward())
    out.set_backward([df](Node& self) {
      const Tensor& x = self.input(0).value;
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
    });
  return out;
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

inline Var sigmoid(const Var& a) {
  return detail::unary(a, detail::sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var silu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x * detail::sigmoid(x); },
      [](double x, double) {
        const double s = detail::sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

inline Var gelu(const Var& a) {
  return detail::unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

/// x^p for positive x.
inline Var pow_scalar(const Var& a, double p) {
  if (p == 1.0) return a;
  return detail::unary(
      a, [p](double x) { return std::pow(x, p); }, [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

inline Var sum(const Var& a) {
  Var out = Var::result(Tensor::scalar(a.value().sum()), {&a});
  if (out.needs_backward())
    out.set_backward([](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      const double s = self.grad[0];
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s;
    });
  return out;
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& a, Shape shape) {
  Var out = Var::result(a.value().reshaped(std::move(shape)), {&a});
  if (out.needs_backward())
    out.set_backward([](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
  return out;
}

namespace detail {

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

/// For each output flat index, the flat index of the source element.
inline std::vector<std::size_t> permute_map(const Shape& in, const std::vector<std::size_t>& perm) {
  const auto in_st = strides_of(in);
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in[perm[i]];
  const std::size_t n = shape_numel(in);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(perm.size(), 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < perm.size(); ++d) src += idx[d] * in_st[perm[d]];
    map[o] = src;
    for (std::size_t d = perm.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace detail

inline Var permute(const Var& a, std::vector<std::size_t> perm) {
  require(perm.size() == a.dim(), Errc::shape_mismatch, "permute rank mismatch");
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.shape()[perm[i]];
  auto map = std::make_shared<std::vector<std::size_t>>(detail::permute_map(a.shape(), perm));
  Tensor v(out_shape);
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[(*map)[i]];
  Var out = Var::result(std::move(v), {&a});
  if (out.needs_backward())
    out.set_backward([map](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) g[(*map)[i]] += self.grad[i];
    });
  return out;
}

/// Elements [start, start+len) along `axis`.
inline Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& s = a.shape();
  require(axis < s.size() && start + len <= s[axis], Errc::shape_mismatch, "slice out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape os = s;
  os[axis] = len;
  Tensor v(os);
  const std::size_t full = s[axis];
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.value().ptr() + (o * full + start) * inner, len * inner, v.ptr() + o * len * inner);
  Var out = Var::result(std::move(v), {&a});
  if (out.needs_backward())
    out.set_backward([outer, inner, full, start, len](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < len * inner; ++i) g[(o * full + start) * inner + i] += self.grad[o * len * inner + i];
    });
  return out;
}

inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  require(!parts.empty(), Errc::shape_mismatch, "concat of nothing");
  const Shape& s0 = parts[0].shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = s0;
    require(a.size() == b.size(), Errc::shape_mismatch, "concat rank mismatch");
    a[axis] = b[axis] = 0;
    require(a == b, Errc::shape_mismatch, "concat: " + shape_str(p.shape()) + " vs " + shape_str(s0));
    widths.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape os = s0;
  os[axis] = total;
  Tensor v(os);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].value().ptr() + o * widths[k] * inner, widths[k] * inner,
                  v.ptr() + (o * total + off) * inner);
      off += widths[k];
    }
  }
  Var out = Var::result(std::move(v), parts);
  if (out.needs_backward())
    out.set_backward([outer, inner, total, widths](Node& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        if (wants(self, k)) {
          Tensor& g = self.input(k).grad_buffer();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < widths[k] * inner; ++i)
              g[o * widths[k] * inner + i] += self.grad[(o * total + off) * inner + i];
        }
        off += widths[k];
      }
    });
  return out;
}

/// x + y where y's shape equals the trailing dims of x (y broadcast over the
/// leading dims).
inline Var add_broadcast(const Var& x, const Var& y) {
  const std::size_t inner = y.value().numel();
  require(x.value().numel() % inner == 0 && x.dim() >= y.dim() &&
              std::equal(y.shape().rbegin(), y.shape().rend(), x.shape().rbegin()),
          Errc::shape_mismatch, "add_broadcast: " + shape_str(x.shape()) + " + " + shape_str(y.shape()));
  Tensor v = x.value();
  const std::size_t outer = v.numel() / inner;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) v[o * inner + i] += y.value()[i];
  Var out = Var::result(std::move(v), {&x, &y});
  if (out.needs_backward())
    out.set_backward([outer, inner](Node& self) {
      if (wants(self, 0)) self.input(0).grad_buffer() += self.grad;
      if (wants(self, 1)) {
        Tensor& g = self.input(1).grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i];
      }
    });
  return out;
}

/// Repeat `x` n times along a new leading axis.
inline Var expand_leading(const Var& x, std::size_t n) {
  Shape s = x.shape();
  s.insert(s.begin(), n);
  return add_broadcast(Var(Tensor(s)), x);
}

// ---------------------------------------------------------------------------
// Linear algebra

/// x[..., in] · w[in, out] + b[out].
inline Var linear(const Var& x, const Var& w, const Var& b = Var()) {
  const std::size_t in = w.size(0), outf = w.size(1);
  require(x.shape().back() == in, Errc::shape_mismatch,
          "linear: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  const std::size_t rows = x.value().numel() / in;
  Shape os = x.shape();
  os.back() = outf;
  Tensor v(os);
  detail::gemm(false, false, rows, outf, in, x.value().ptr(), w.value().ptr(), v.ptr(), false);
  if (b.defined())
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outf; ++j) v[r * outf + j] += b.value()[j];
  Var out = Var::result(std::move(v), {&x, &w, &b});
  if (out.needs_backward())
    out.set_backward([rows, in, outf](Node& self) {
      if (wants(self, 0))
        detail::gemm(false, true, rows, in, outf, self.grad.ptr(), self.input(1).value.ptr(),
                     self.input(0).grad_buffer().ptr(), true);
      if (wants(self, 1))
        detail::gemm(true, false, in, outf, rows, self.input(0).value.ptr(), self.grad.ptr(),
                     self.input(1).grad_buffer().ptr(), true);
      if (wants(self, 2)) {
        Tensor& g = self.input(2).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < outf; ++j) g[j] += self.grad[r * outf + j];
      }
    });
  return out;
}

/// Batched matmul: a[B,M,K] · b[B,K,N] (or b[B,N,K] transposed when trans_b).
inline Var bmm(const Var& a, const Var& b, bool trans_b = false) {
  require(a.dim() == 3 && b.dim() == 3 && a.size(0) == b.size(0), Errc::shape_mismatch, "bmm rank/batch");
  const std::size_t B = a.size(0), M = a.size(1), K = a.size(2);
  const std::size_t N = trans_b ? b.size(1) : b.size(2);
  require((trans_b ? b.size(2) : b.size(1)) == K, Errc::shape_mismatch,
          "bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor v({B, M, N});
  for (std::size_t i = 0; i < B; ++i)
    detail::gemm(false, trans_b, M, N, K, a.value().ptr() + i * M * K, b.value().ptr() + i * K * N,
                 v.ptr() + i * M * N, false);
  Var out = Var::result(std::move(v), {&a, &b});
  if (out.needs_backward())
    out.set_backward([B, M, N, K, trans_b](Node& self) {
      for (std::size_t i = 0; i < B; ++i) {
        const double* g = self.grad.ptr() + i * M * N;
        if (wants(self, 0))  // dA = dC · op(B)^T
          detail::gemm(false, !trans_b, M, K, N, g, self.input(1).value.ptr() + i * K * N,
                       self.input(0).grad_buffer().ptr() + i * M * K, true);
        if (wants(self, 1)) {
          double* gb = self.input(1).grad_buffer().ptr() + i * K * N;
          if (trans_b)  // dB[N,K] = dC^T · A
            detail::gemm(true, false, N, K, M, g, self.input(0).value.ptr() + i * M * K, gb, true);
          else  // dB[K,N] = A^T · dC
            detail::gemm(true, false, K, N, M, self.input(0).value.ptr() + i * M * K, g, gb, true);
        }
      }
    });
  return out;
}

/// Softmax over the last axis.
inline Var softmax(const Var& a) {
  const std::size_t d = a.shape().back();
  const std::size_t rows = a.value().numel() / d;
  Tensor v(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.value().ptr() + r * d;
    double* y = v.ptr() + r * d;
    const double m = *std::max_element(x, x + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (y[j] = std::exp(x[j] - m));
    for (std::size_t j = 0; j < d; ++j) y[j] /= z;
  }
  Var out = Var::result(std::move(v), {&a});
  if (out.needs_backward())
    out.set_backward([rows, d](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.ptr() + r * d;
        const double* dy = self.grad.ptr() + r * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += dy[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (dy[j] - dot);
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/// Normalizes each row over the last axis, then applies gamma/beta.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6) {
  const std::size_t d = x.shape().back();
  require(gamma.value().numel() == d && beta.value().numel() == d, Errc::shape_mismatch, "layer_norm params");
  const std::size_t rows = x.value().numel() / d;
  Tensor v(x.shape());
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.value().ptr() + r * d;
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      v[r * d + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  Var out = Var::result(std::move(v), {&x, &gamma, &beta});
  if (out.needs_backward())
    out.set_backward([rows, d, xhat, inv_std](Node& self) {
      const Tensor& gm = self.input(1).value;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dy = self.grad.ptr() + r * d;
        const double* h = xhat->ptr() + r * d;
        if (wants(self, 0)) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = dy[j] * gm[j];
            m1 += dh;
            m2 += dh * h[j];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          double* g = self.input(0).grad_buffer().ptr() + r * d;
          for (std::size_t j = 0; j < d; ++j) g[j] += (*inv_std)[r] * (dy[j] * gm[j] - m1 - h[j] * m2);
        }
        if (wants(self, 1)) {
          Tensor& g = self.input(1).grad_buffer();
          for (std::size_t j = 0; j < d; ++j) g[j] += dy[j] * h[j];
        }
        if (wants(self, 2)) {
          Tensor& g = self.input(2).grad_buffer();
          for (std::size_t j = 0; j < d; ++j) g[j] += dy[j];
        }
      }
    });
  return out;
}

/// Group normalization of x[N,C,H,W] over (C/groups, H, W) per sample.
inline Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta, double eps = 1e-5) {
  require(x.dim() == 4, Errc::shape_mismatch, "group_norm expects NCHW");
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  require(groups > 0 && c % groups == 0, Errc::configuration,
          "group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
  const std::size_t cg = c / groups, len = cg * hw;
  Tensor v(x.shape());
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n * groups);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (b * c + g * cg) * hw;
      const double* xi = x.value().ptr() + base;
      double mu = 0.0, var = 0.0;
      for (std::size_t i = 0; i < len; ++i) mu += xi[i];
      mu /= static_cast<double>(len);
      for (std::size_t i = 0; i < len; ++i) var += (xi[i] - mu) * (xi[i] - mu);
      var /= static_cast<double>(len);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[b * groups + g] = is;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t ch = g * cg + i / hw;
        const double h = (xi[i] - mu) * is;
        (*xhat)[base + i] = h;
        v[base + i] = h * gamma.value()[ch] + beta.value()[ch];
      }
    }
  Var out = Var::result(std::move(v), {&x, &gamma, &beta});
  if (out.needs_backward())
    out.set_backward([n, c, hw, groups, cg, len, xhat, inv_std](Node& self) {
      const Tensor& gm = self.input(1).value;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t base = (b * c + g * cg) * hw;
          const double* dy = self.grad.ptr() + base;
          const double* h = xhat->ptr() + base;
          if (wants(self, 0)) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
              const double dh = dy[i] * gm[g * cg + i / hw];
              m1 += dh;
              m2 += dh * h[i];
            }
            m1 /= static_cast<double>(len);
            m2 /= static_cast<double>(len);
            double* gx = self.input(0).grad_buffer().ptr() + base;
            const double is = (*inv_std)[b * groups + g];
            for (std::size_t i = 0; i < len; ++i) gx[i] += is * (dy[i] * gm[g * cg + i / hw] - m1 - h[i] * m2);
          }
          if (wants(self, 1)) {
            Tensor& gg = self.input(1).grad_buffer();
            for (std::size_t i = 0; i < len; ++i) gg[g * cg + i / hw] += dy[i] * h[i];
          }
          if (wants(self, 2)) {
            Tensor& gb = self.input(2).grad_buffer();
            for (std::size_t i = 0; i < len; ++i) gb[g * cg + i / hw] += dy[i];
          }
        }
    });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

/// x[N,C,H,W] * w[O,C,k,k] (+ b[O]) with square kernel, stride and zero pad.
inline Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1, std::size_t pad = 0) {
  require(x.dim() == 4 && w.dim() == 4 && w.size(1) == x.size(1) && w.size(2) == w.size(3), Errc::shape_mismatch,
          "conv2d: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  const std::size_t k = w.size(2), o = w.size(0);
  require(x.size(2) + 2 * pad >= k && x.size(3) + 2 * pad >= k, Errc::shape_mismatch, "conv2d: kernel larger than input");
  detail::ConvGeom g{x.size(0), x.size(1), x.size(2), x.size(3), k, stride, pad,
                     (x.size(2) + 2 * pad - k) / stride + 1, (x.size(3) + 2 * pad - k) / stride + 1};
  const std::size_t ckk = g.c * k * k, cols = g.n * g.oh * g.ow, plane = g.oh * g.ow;
  std::vector<double> col(ckk * cols);
  detail::im2col(x.value().ptr(), g, col.data());
  std::vector<double> y(o * cols);
  detail::gemm(false, false, o, cols, ckk, w.value().ptr(), col.data(), y.data(), false);
  if (b.defined())
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < cols; ++i) y[oc * cols + i] += b.value()[oc];
  Tensor v({g.n, o, g.oh, g.ow});
  detail::channel_major_to_batch(y.data(), g.n, o, plane, v.ptr());
  Var out = Var::result(std::move(v), {&x, &w, &b});
  if (out.needs_backward())
    out.set_backward([g, o, ckk, cols, plane](Node& self) {
      std::vector<double> dy(o * cols);
      detail::batch_to_channel_major(self.grad.ptr(), g.n, o, plane, dy.data());
      if (wants(self, 1)) {
        std::vector<double> col(ckk * cols);
        detail::im2col(self.input(0).value.ptr(), g, col.data());
        detail::gemm(false, true, o, ckk, cols, dy.data(), col.data(), self.input(1).grad_buffer().ptr(), true);
      }
      if (wants(self, 0)) {
        std::vector<double> dcol(ckk * cols);
        detail::gemm(true, false, ckk, cols, o, self.input(1).value.ptr(), dy.data(), dcol.data(), false);
        detail::col2im(dcol.data(), g, self.input(0).grad_buffer().ptr());
      }
      if (wants(self, 2)) {
        Tensor& gb = self.input(2).grad_buffer();
        for (std::size_t oc = 0; oc < o; ++oc)
          for (std::size_t i = 0; i < cols; ++i) gb[oc] += dy[oc * cols + i];
      }
    });
  return out;
}

/// Transposed convolution x[N,C,H,W] with w[C,O,k,k] (+ b[O]), no padding:
/// output side (H-1)*stride + k.
inline Var conv_transpose2d(const Var& x, const Var& w, const Var& b, std::size_t stride) {
  require(x.dim() == 4 && w.dim() == 4 && w.size(0) == x.size(1) && w.size(2) == w.size(3), Errc::shape_mismatch,
          "conv_transpose2d: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  const std::size_t n = x.size(0), c = x.size(1), h = x.size(2), wd = x.size(3);
  const std::size_t o = w.size(1), k = w.size(2);
  const std::size_t oh = (h - 1) * stride + k, ow = (wd - 1) * stride + k;
  // Geometry of the equivalent forward conv over the output map.
  detail::ConvGeom g{n, o, oh, ow, k, stride, 0, h, wd};
  const std::size_t okk = o * k * k, cols = n * h * wd, plane = h * wd;
  std::vector<double> xm(c * cols);
  detail::batch_to_channel_major(x.value().ptr(), n, c, plane, xm.data());
  std::vector<double> col(okk * cols);
  detail::gemm(true, false, okk, cols, c, w.value().ptr(), xm.data(), col.data(), false);
  Tensor v({n, o, oh, ow});
  detail::col2im(col.data(), g, v.ptr());
  if (b.defined())
    for (std::size_t bi = 0; bi < n; ++bi)
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < oh * ow; ++i) v[(bi * o + oc) * oh * ow + i] += b.value()[oc];
  Var out = Var::result(std::move(v), {&x, &w, &b});
  if (out.needs_backward())
    out.set_backward([g, n, c, o, okk, cols, plane, oh, ow](Node& self) {
      std::vector<double> dcol(okk * cols);
      detail::im2col(self.grad.ptr(), g, dcol.data());
      if (wants(self, 0)) {
        std::vector<double> dx(c * cols);
        detail::gemm(false, false, c, cols, okk, self.input(1).value.ptr(), dcol.data(), dx.data(), false);
        std::vector<double> dxb(c * cols);
        detail::channel_major_to_batch(dx.data(), n, c, plane, dxb.data());
        Tensor& gx = self.input(0).grad_buffer();
        for (std::size_t i = 0; i < dxb.size(); ++i) gx[i] += dxb[i];
      }
      if (wants(self, 1)) {
        std::vector<double> xm(c * cols);
        detail::batch_to_channel_major(self.input(0).value.ptr(), n, c, plane, xm.data());
        detail::gemm(false, true, c, okk, cols, xm.data(), dcol.data(), self.input(1).grad_buffer().ptr(), true);
      }
      if (wants(self, 2)) {
        Tensor& gb = self.input(2).grad_buffer();
        for (std::size_t bi = 0; bi < n; ++bi)
          for (std::size_t oc = 0; oc < o; ++oc)
            for (std::size_t i = 0; i < oh * ow; ++i) gb[oc] += self.grad[(bi * o + oc) * oh * ow + i];
      }
    });
  return out;
}

/// Mean over H, W: x[N,C,H,W] -> [N,C].
inline Var global_avg_pool(const Var& x) {
  require(x.dim() == 4, Errc::shape_mismatch, "global_avg_pool expects NCHW");
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  Tensor v({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x.value()[i * hw + j];
    v[i] = s / static_cast<double>(hw);
  }
  Var out = Var::result(std::move(v), {&x});
  if (out.needs_backward())
    out.set_backward([n, c, hw](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t i = 0; i < n * c; ++i) {
        const double d = self.grad[i] / static_cast<double>(hw);
        for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] += d;
      }
    });
  return out;
}

}  // namespace laax::ag
