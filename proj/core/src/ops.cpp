#include "nibkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nibkit {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes differ, " + a.shape().str() + " vs " +
                     b.shape().str());
}

// ---- elementwise helpers ----------------------------------------------------

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_pointwise(const char* op, const Tensor<T>& x, FwdFn fwd, BwdFn dydx_from_y) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto xi = x.impl_;
  return detail::make_from_op<T>(op, x.shape(), std::move(out), {x},
                                 [xi, dydx_from_y](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   for (std::size_t i = 0; i < o.values.size(); ++i)
                                     xi->grad[i] += o.grad[i] * dydx_from_y(o.values[i], xi->values[i]);
                                 });
}

// ---- symmetric boundary reflection (edge pixel repeated) --------------------

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

// One separable blur pass. gather: out[p] = sum_d k[d] * in[reflect(p+d-c)].
// scatter is its exact adjoint: in[reflect(p+d-c)] += k[d] * out[p].
template <typename T>
void blur_pass(const T* in, T* out, int h, int w, const std::vector<T>& kern, bool vertical,
               bool scatter) {
  const int k = static_cast<int>(kern.size());
  const int c = k / 2;
  if (!scatter) std::fill(out, out + std::size_t(h) * w, T(0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = std::size_t(y) * w + x;
      if (!scatter) {
        T acc = 0;
        for (int d = 0; d < k; ++d) {
          const int q = vertical ? reflect_index(y + d - c, h) : reflect_index(x + d - c, w);
          const std::size_t src = vertical ? std::size_t(q) * w + x : std::size_t(y) * w + q;
          acc += kern[d] * in[src];
        }
        out[p] = acc;
      } else {
        const T g = in[p];
        for (int d = 0; d < k; ++d) {
          const int q = vertical ? reflect_index(y + d - c, h) : reflect_index(x + d - c, w);
          const std::size_t dst = vertical ? std::size_t(q) * w + x : std::size_t(y) * w + q;
          out[dst] += kern[d] * g;
        }
      }
    }
  }
}

template <typename T>
std::vector<T> gaussian_kernel(double sigma, int ksize) {
  std::vector<double> g(ksize);
  const int c = ksize / 2;
  double sum = 0.0;
  for (int i = 0; i < ksize; ++i) {
    const double t = (i - c) / sigma;
    g[i] = std::exp(-0.5 * t * t);
    sum += g[i];
  }
  std::vector<T> out(ksize);
  for (int i = 0; i < ksize; ++i) out[i] = static_cast<T>(g[i] / sum);
  return out;
}

// ---- orthonormal DCT-II -----------------------------------------------------

template <typename T>
std::vector<T> dct_matrix(int n) {
  std::vector<T> d(std::size_t(n) * n);
  const double pi = 3.14159265358979323846;
  for (int j = 0; j < n; ++j) {
    const double scale = j == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      d[std::size_t(j) * n + i] = static_cast<T>(scale * std::cos(pi * (2 * i + 1) * j / (2.0 * n)));
  }
  return d;
}

// C (m x n) = A (m x k) * B (k x n)
template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  std::fill(c, c + std::size_t(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const T av = a[std::size_t(i) * k + p];
      const T* brow = b + std::size_t(p) * n;
      T* crow = c + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// C (m x n) = A (m x k) * B^T, B is (n x k)
template <typename T>
void matmul_bt(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const T* ar = a + std::size_t(i) * k;
      const T* br = b + std::size_t(j) * k;
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      c[std::size_t(i) * n + j] = acc;
    }
}

// C (k x n) = A^T * B, A is (m x k), B is (m x n)
template <typename T>
void matmul_at(const T* a, const T* b, T* c, int m, int k, int n) {
  std::fill(c, c + std::size_t(k) * n, T(0));
  for (int u = 0; u < m; ++u)
    for (int i = 0; i < k; ++i) {
      const T av = a[std::size_t(u) * k + i];
      const T* brow = b + std::size_t(u) * n;
      T* crow = c + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

template <typename T>
void dct2_plane(const T* x, T* y, int h, int w, const std::vector<T>& dh, const std::vector<T>& dw,
                bool inverse, std::vector<T>& scratch) {
  scratch.resize(std::size_t(h) * w);
  if (!inverse) {
    matmul(dh.data(), x, scratch.data(), h, h, w);          // Dh * X
    matmul_bt(scratch.data(), dw.data(), y, h, w, w);       // * Dw^T
  } else {
    matmul_at(dh.data(), x, scratch.data(), h, h, w);       // Dh^T * Y
    matmul(scratch.data(), dw.data(), y, h, w, w);          // * Dw
  }
}

template <typename T>
void dct2_apply(const T* in, T* out, const Shape& s, bool inverse) {
  const auto dh = dct_matrix<T>(s.h);
  const auto dw = dct_matrix<T>(s.w);
  std::vector<T> scratch;
  const std::size_t plane = std::size_t(s.h) * s.w;
  for (std::int64_t p = 0; p < std::int64_t(s.n) * s.c; ++p)
    dct2_plane(in + p * plane, out + p * plane, s.h, s.w, dh, dw, inverse, scratch);
}

// ---- conv2d kernels ----------------------------------------------------------

struct ConvDims {
  int n, ci, hi, wi, co, k, ho, wo, stride, pad;
};

// Ranges of output coordinates whose source index stays inside the image for
// a fixed kernel tap offset.
inline void tap_range(int pad, int koff, int stride, int in_size, int out_size, int& lo, int& hi) {
  const int shift = pad - koff;
  lo = shift > 0 ? (shift + stride - 1) / stride : 0;
  const int top = in_size - 1 + pad - koff;
  hi = top < 0 ? -1 : std::min(out_size - 1, top / stride);
}

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* out, const ConvDims& d) {
  const std::size_t xplane = std::size_t(d.hi) * d.wi;
  const std::size_t oplane = std::size_t(d.ho) * d.wo;
  for (int b = 0; b < d.n; ++b)
    for (int oc = 0; oc < d.co; ++oc) {
      T* op = out + (std::size_t(b) * d.co + oc) * oplane;
      std::fill(op, op + oplane, bias ? bias[oc] : T(0));
      for (int ic = 0; ic < d.ci; ++ic) {
        const T* xp = x + (std::size_t(b) * d.ci + ic) * xplane;
        const T* wk = w + (std::size_t(oc) * d.ci + ic) * d.k * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          int oy_lo, oy_hi;
          tap_range(d.pad, ky, d.stride, d.hi, d.ho, oy_lo, oy_hi);
          for (int kx = 0; kx < d.k; ++kx) {
            const T wv = wk[ky * d.k + kx];
            int ox_lo, ox_hi;
            tap_range(d.pad, kx, d.stride, d.wi, d.wo, ox_lo, ox_hi);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const T* xr = xp + std::size_t(oy * d.stride - d.pad + ky) * d.wi +
                            (ox_lo * d.stride - d.pad + kx);
              T* orow = op + std::size_t(oy) * d.wo + ox_lo;
              const int len = ox_hi - ox_lo + 1;
              if (d.stride == 1)
                for (int i = 0; i < len; ++i) orow[i] += wv * xr[i];
              else
                for (int i = 0; i < len; ++i) orow[i] += wv * xr[std::size_t(i) * d.stride];
            }
          }
        }
      }
    }
}

template <typename T>
void conv2d_grad_input(const T* gout, const T* w, T* gx, const ConvDims& d) {
  const std::size_t xplane = std::size_t(d.hi) * d.wi;
  const std::size_t oplane = std::size_t(d.ho) * d.wo;
  for (int b = 0; b < d.n; ++b)
    for (int oc = 0; oc < d.co; ++oc) {
      const T* gp = gout + (std::size_t(b) * d.co + oc) * oplane;
      for (int ic = 0; ic < d.ci; ++ic) {
        T* gxp = gx + (std::size_t(b) * d.ci + ic) * xplane;
        const T* wk = w + (std::size_t(oc) * d.ci + ic) * d.k * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          int oy_lo, oy_hi;
          tap_range(d.pad, ky, d.stride, d.hi, d.ho, oy_lo, oy_hi);
          for (int kx = 0; kx < d.k; ++kx) {
            const T wv = wk[ky * d.k + kx];
            int ox_lo, ox_hi;
            tap_range(d.pad, kx, d.stride, d.wi, d.wo, ox_lo, ox_hi);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              T* gxr = gxp + std::size_t(oy * d.stride - d.pad + ky) * d.wi +
                       (ox_lo * d.stride - d.pad + kx);
              const T* grow = gp + std::size_t(oy) * d.wo + ox_lo;
              const int len = ox_hi - ox_lo + 1;
              if (d.stride == 1)
                for (int i = 0; i < len; ++i) gxr[i] += wv * grow[i];
              else
                for (int i = 0; i < len; ++i) gxr[std::size_t(i) * d.stride] += wv * grow[i];
            }
          }
        }
      }
    }
}

template <typename T>
void conv2d_grad_weight(const T* gout, const T* x, T* gw, const ConvDims& d) {
  const std::size_t xplane = std::size_t(d.hi) * d.wi;
  const std::size_t oplane = std::size_t(d.ho) * d.wo;
  for (int b = 0; b < d.n; ++b)
    for (int oc = 0; oc < d.co; ++oc) {
      const T* gp = gout + (std::size_t(b) * d.co + oc) * oplane;
      for (int ic = 0; ic < d.ci; ++ic) {
        const T* xp = x + (std::size_t(b) * d.ci + ic) * xplane;
        T* wk = gw + (std::size_t(oc) * d.ci + ic) * d.k * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          int oy_lo, oy_hi;
          tap_range(d.pad, ky, d.stride, d.hi, d.ho, oy_lo, oy_hi);
          for (int kx = 0; kx < d.k; ++kx) {
            int ox_lo, ox_hi;
            tap_range(d.pad, kx, d.stride, d.wi, d.wo, ox_lo, ox_hi);
            T acc = 0;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const T* xr = xp + std::size_t(oy * d.stride - d.pad + ky) * d.wi +
                            (ox_lo * d.stride - d.pad + kx);
              const T* grow = gp + std::size_t(oy) * d.wo + ox_lo;
              const int len = ox_hi - ox_lo + 1;
              if (d.stride == 1)
                for (int i = 0; i < len; ++i) acc += grow[i] * xr[i];
              else
                for (int i = 0; i < len; ++i) acc += grow[i] * xr[std::size_t(i) * d.stride];
            }
            wk[ky * d.k + kx] += acc;
          }
        }
      }
    }
}

}  // namespace

// ---- public ops --------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("add", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  auto ai = a.impl_;
  auto bi = b.impl_;
  return detail::make_from_op<T>("add", a.shape(), std::move(out), {a, b},
                                 [ai, bi](detail::TensorImpl<T>& o) {
                                   if (ai->requires_grad) {
                                     detail::ensure_grad(*ai);
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i];
                                   }
                                   if (bi->requires_grad) {
                                     detail::ensure_grad(*bi);
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] += o.grad[i];
                                   }
                                 });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("sub", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  auto ai = a.impl_;
  auto bi = b.impl_;
  return detail::make_from_op<T>("sub", a.shape(), std::move(out), {a, b},
                                 [ai, bi](detail::TensorImpl<T>& o) {
                                   if (ai->requires_grad) {
                                     detail::ensure_grad(*ai);
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i];
                                   }
                                   if (bi->requires_grad) {
                                     detail::ensure_grad(*bi);
                                     for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= o.grad[i];
                                   }
                                 });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("mul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  auto ai = a.impl_;
  auto bi = b.impl_;
  return detail::make_from_op<T>("mul", a.shape(), std::move(out), {a, b},
                                 [ai, bi](detail::TensorImpl<T>& o) {
                                   if (ai->requires_grad) {
                                     detail::ensure_grad(*ai);
                                     for (std::size_t i = 0; i < o.grad.size(); ++i)
                                       ai->grad[i] += o.grad[i] * bi->values[i];
                                   }
                                   if (bi->requires_grad) {
                                     detail::ensure_grad(*bi);
                                     for (std::size_t i = 0; i < o.grad.size(); ++i)
                                       bi->grad[i] += o.grad[i] * ai->values[i];
                                   }
                                 });
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = scale * xv[i] + shift;
  auto xi = x.impl_;
  return detail::make_from_op<T>("affine", x.shape(), std::move(out), {x},
                                 [xi, scale](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   for (std::size_t i = 0; i < o.grad.size(); ++i)
                                     xi->grad[i] += o.grad[i] * scale;
                                 });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_pointwise<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T y, T) { return y > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope) {
  const T a = negative_slope;
  return unary_pointwise<T>(
      "leaky_relu", x, [a](T v) { return v >= T(0) ? v : a * v; },
      [a](T y, T) { return y >= T(0) ? T(1) : a; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_pointwise<T>(
      "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T y, T) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary_pointwise<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T y, T) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w)
    throw ShapeError("conv2d: kernel must be square, weight shape " + ws.str());
  if (ws.c != xs.c)
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels but weight " +
                     ws.str() + " expects " + std::to_string(ws.c));
  if (stride < 1) throw ValueError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ValueError("conv2d: padding must be >= 0, got " + std::to_string(padding));
  if (ws.h % 2 == 0 && padding != 0)
    throw ValueError("conv2d: even kernel size " + std::to_string(ws.h) +
                     " admits no symmetric padding; use an odd kernel or padding 0");
  if (bias.defined()) {
    const Shape want{1, ws.n, 1, 1};
    if (bias.shape() != want)
      throw ShapeError("conv2d: bias shape " + bias.shape().str() + " does not match " +
                       want.str() + " for " + std::to_string(ws.n) + " output channels");
  }

  ConvDims d{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, 0, 0, stride, padding};
  d.ho = (xs.h + 2 * padding - d.k) / stride + 1;
  d.wo = (xs.w + 2 * padding - d.k) / stride + 1;
  if (xs.h + 2 * padding < d.k || xs.w + 2 * padding < d.k)
    throw ShapeError("conv2d: kernel " + std::to_string(d.k) + "x" + std::to_string(d.k) +
                     " exceeds padded input " + xs.str() + " with padding " +
                     std::to_string(padding));

  std::vector<T> out(std::size_t(xs.n) * d.co * d.ho * d.wo);
  conv2d_forward(x.values().data(), weight.values().data(),
                 bias.defined() ? bias.values().data() : nullptr, out.data(), d);

  auto xi = x.impl_;
  auto wi = weight.impl_;
  auto bi = bias.defined() ? bias.impl_ : nullptr;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_from_op<T>(
      "conv2d", Shape{xs.n, d.co, d.ho, d.wo}, std::move(out), inputs,
      [xi, wi, bi, d](detail::TensorImpl<T>& o) {
        if (xi->requires_grad) {
          detail::ensure_grad(*xi);
          conv2d_grad_input(o.grad.data(), wi->values.data(), xi->grad.data(), d);
        }
        if (wi->requires_grad) {
          detail::ensure_grad(*wi);
          conv2d_grad_weight(o.grad.data(), xi->values.data(), wi->grad.data(), d);
        }
        if (bi && bi->requires_grad) {
          detail::ensure_grad(*bi);
          const std::size_t oplane = std::size_t(d.ho) * d.wo;
          for (int b = 0; b < d.n; ++b)
            for (int oc = 0; oc < d.co; ++oc) {
              const T* gp = o.grad.data() + (std::size_t(b) * d.co + oc) * oplane;
              T acc = 0;
              for (std::size_t i = 0; i < oplane; ++i) acc += gp[i];
              bi->grad[oc] += acc;
            }
        }
      });
}

template <typename T>
Tensor<T> dct2(const Tensor<T>& x) {
  const Shape s = x.shape();
  std::vector<T> out(x.values().size());
  dct2_apply(x.values().data(), out.data(), s, /*inverse=*/false);
  auto xi = x.impl_;
  return detail::make_from_op<T>("dct2", s, std::move(out), {x},
                                 [xi, s](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   std::vector<T> gx(o.grad.size());
                                   dct2_apply(o.grad.data(), gx.data(), s, /*inverse=*/true);
                                   for (std::size_t i = 0; i < gx.size(); ++i) xi->grad[i] += gx[i];
                                 });
}

template <typename T>
Tensor<T> idct2(const Tensor<T>& x) {
  const Shape s = x.shape();
  std::vector<T> out(x.values().size());
  dct2_apply(x.values().data(), out.data(), s, /*inverse=*/true);
  auto xi = x.impl_;
  return detail::make_from_op<T>("idct2", s, std::move(out), {x},
                                 [xi, s](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   std::vector<T> gx(o.grad.size());
                                   dct2_apply(o.grad.data(), gx.data(), s, /*inverse=*/false);
                                   for (std::size_t i = 0; i < gx.size(); ++i) xi->grad[i] += gx[i];
                                 });
}

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, double sigma, int ksize) {
  if (sigma <= 0) throw ValueError("gaussian_blur: sigma must be > 0, got " + std::to_string(sigma));
  if (ksize < 1 || ksize % 2 == 0)
    throw ValueError("gaussian_blur: kernel size must be odd and >= 1, got " + std::to_string(ksize));
  const Shape s = x.shape();
  const auto kern = gaussian_kernel<T>(sigma, ksize);
  const std::size_t plane = std::size_t(s.h) * s.w;
  const std::int64_t planes = std::int64_t(s.n) * s.c;

  std::vector<T> tmp(plane), out(x.values().size());
  for (std::int64_t p = 0; p < planes; ++p) {
    blur_pass(x.values().data() + p * plane, tmp.data(), s.h, s.w, kern, /*vertical=*/false, false);
    blur_pass(tmp.data(), out.data() + p * plane, s.h, s.w, kern, /*vertical=*/true, false);
  }

  auto xi = x.impl_;
  return detail::make_from_op<T>(
      "gaussian_blur", s, std::move(out), {x}, [xi, s, kern, plane, planes](detail::TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        detail::ensure_grad(*xi);
        std::vector<T> gtmp(plane), gtmp2(plane);
        for (std::int64_t p = 0; p < planes; ++p) {
          std::fill(gtmp.begin(), gtmp.end(), T(0));
          blur_pass(o.grad.data() + p * plane, gtmp.data(), s.h, s.w, kern, /*vertical=*/true, true);
          std::fill(gtmp2.begin(), gtmp2.end(), T(0));
          blur_pass(gtmp.data(), gtmp2.data(), s.h, s.w, kern, /*vertical=*/false, true);
          T* gx = xi->grad.data() + p * plane;
          for (std::size_t i = 0; i < plane; ++i) gx[i] += gtmp2[i];
        }
      });
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, 2 * s.h, 2 * s.w};
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  const T* in = x.values().data();
  for (std::int64_t p = 0; p < std::int64_t(s.n) * s.c; ++p) {
    const T* ip = in + p * s.plane();
    T* op = out.data() + p * os.plane();
    for (int y = 0; y < s.h; ++y)
      for (int x2 = 0; x2 < s.w; ++x2) {
        const T v = ip[std::size_t(y) * s.w + x2];
        T* row0 = op + std::size_t(2 * y) * os.w + 2 * x2;
        T* row1 = row0 + os.w;
        row0[0] = row0[1] = row1[0] = row1[1] = v;
      }
  }
  auto xi = x.impl_;
  return detail::make_from_op<T>("upsample_nearest2", os, std::move(out), {x},
                                 [xi, s, os](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   for (std::int64_t p = 0; p < std::int64_t(s.n) * s.c; ++p) {
                                     const T* gp = o.grad.data() + p * os.plane();
                                     T* gx = xi->grad.data() + p * s.plane();
                                     for (int y = 0; y < s.h; ++y)
                                       for (int x2 = 0; x2 < s.w; ++x2) {
                                         const T* row0 = gp + std::size_t(2 * y) * os.w + 2 * x2;
                                         const T* row1 = row0 + os.w;
                                         gx[std::size_t(y) * s.w + x2] +=
                                             row0[0] + row0[1] + row1[0] + row1[1];
                                       }
                                   }
                                 });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  if (eps <= T(0)) throw ValueError("instance_norm: eps must be > 0");
  const Shape s = x.shape();
  const std::size_t plane = std::size_t(s.h) * s.w;
  const std::int64_t planes = std::int64_t(s.n) * s.c;
  std::vector<T> out(x.values().size());
  std::vector<T> inv_std(static_cast<std::size_t>(planes));
  const T* in = x.values().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* ip = in + p * plane;
    double mean = 0;
    for (std::size_t i = 0; i < plane; ++i) mean += ip[i];
    mean /= double(plane);
    double var = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double dv = ip[i] - mean;
      var += dv * dv;
    }
    var /= double(plane);
    const T is = static_cast<T>(1.0 / std::sqrt(var + double(eps)));
    inv_std[static_cast<std::size_t>(p)] = is;
    T* op = out.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) op[i] = static_cast<T>((ip[i] - mean) * is);
  }
  auto xi = x.impl_;
  return detail::make_from_op<T>(
      "instance_norm", s, std::move(out), {x},
      [xi, plane, planes, inv_std](detail::TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        detail::ensure_grad(*xi);
        for (std::int64_t p = 0; p < planes; ++p) {
          const T* g = o.grad.data() + p * plane;
          const T* y = o.values.data() + p * plane;
          T* gx = xi->grad.data() + p * plane;
          double gmean = 0, gymean = 0;
          for (std::size_t i = 0; i < plane; ++i) {
            gmean += g[i];
            gymean += double(g[i]) * y[i];
          }
          gmean /= double(plane);
          gymean /= double(plane);
          const T is = inv_std[static_cast<std::size_t>(p)];
          for (std::size_t i = 0; i < plane; ++i)
            gx[i] += static_cast<T>(is * (g[i] - gmean - y[i] * gymean));
        }
      });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat_channels: shapes " + sa.str() + " and " + sb.str() +
                     " differ outside the channel axis");
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  const std::size_t plane = std::size_t(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.values().data() + std::size_t(n) * sa.c * plane, std::size_t(sa.c) * plane,
                out.data() + std::size_t(n) * os.c * plane);
    std::copy_n(b.values().data() + std::size_t(n) * sb.c * plane, std::size_t(sb.c) * plane,
                out.data() + (std::size_t(n) * os.c + sa.c) * plane);
  }
  auto ai = a.impl_;
  auto bi = b.impl_;
  return detail::make_from_op<T>(
      "concat_channels", os, std::move(out), {a, b},
      [ai, bi, sa, sb, os, plane](detail::TensorImpl<T>& o) {
        for (int n = 0; n < sa.n; ++n) {
          const T* gp = o.grad.data() + std::size_t(n) * os.c * plane;
          if (ai->requires_grad) {
            detail::ensure_grad(*ai);
            T* ga = ai->grad.data() + std::size_t(n) * sa.c * plane;
            for (std::size_t i = 0; i < std::size_t(sa.c) * plane; ++i) ga[i] += gp[i];
          }
          if (bi->requires_grad) {
            detail::ensure_grad(*bi);
            T* gb = bi->grad.data() + std::size_t(n) * sb.c * plane;
            const T* gpb = gp + std::size_t(sa.c) * plane;
            for (std::size_t i = 0; i < std::size_t(sb.c) * plane; ++i) gb[i] += gpb[i];
          }
        }
      });
}

template <typename T>
Tensor<T> narrow_batch(const Tensor<T>& x, int index) {
  const Shape& s = x.shape();
  if (index < 0 || index >= s.n)
    throw ShapeError("narrow_batch: index " + std::to_string(index) + " out of range for " + s.str());
  const std::size_t chunk = std::size_t(s.c) * s.h * s.w;
  std::vector<T> out(chunk);
  std::copy_n(x.values().data() + std::size_t(index) * chunk, chunk, out.data());
  auto xi = x.impl_;
  return detail::make_from_op<T>("narrow_batch", Shape{1, s.c, s.h, s.w}, std::move(out), {x},
                                 [xi, index, chunk](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   T* gx = xi->grad.data() + std::size_t(index) * chunk;
                                   for (std::size_t i = 0; i < chunk; ++i) gx[i] += o.grad[i];
                                 });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.values()) acc += v;
  auto xi = x.impl_;
  return detail::make_from_op<T>("sum_all", kScalarShape, {static_cast<T>(acc)}, {x},
                                 [xi](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   const T g = o.grad[0];
                                   for (auto& gv : xi->grad) gv += g;
                                 });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.values()) acc += v;
  const double inv_n = 1.0 / double(x.numel());
  auto xi = x.impl_;
  return detail::make_from_op<T>("mean_all", kScalarShape, {static_cast<T>(acc * inv_n)}, {x},
                                 [xi, inv_n](detail::TensorImpl<T>& o) {
                                   if (!xi->requires_grad) return;
                                   detail::ensure_grad(*xi);
                                   const T g = static_cast<T>(o.grad[0] * inv_n);
                                   for (auto& gv : xi->grad) gv += g;
                                 });
}

template <typename T>
Tensor<T> mean_abs(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.values()) acc += std::abs(double(v));
  const double inv_n = 1.0 / double(x.numel());
  auto xi = x.impl_;
  return detail::make_from_op<T>(
      "mean_abs", kScalarShape, {static_cast<T>(acc * inv_n)}, {x},
      [xi, inv_n](detail::TensorImpl<T>& o) {
        if (!xi->requires_grad) return;
        detail::ensure_grad(*xi);
        const T g = static_cast<T>(o.grad[0] * inv_n);
        for (std::size_t i = 0; i < xi->values.size(); ++i) {
          const T v = xi->values[i];
          xi->grad[i] += v > T(0) ? g : (v < T(0) ? -g : T(0));
        }
      });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("l1_loss", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(double(av[i]) - double(bv[i]));
  const double inv_n = 1.0 / double(a.numel());
  auto ai = a.impl_;
  auto bi = b.impl_;
  return detail::make_from_op<T>(
      "l1_loss", kScalarShape, {static_cast<T>(acc * inv_n)}, {a, b},
      [ai, bi, inv_n](detail::TensorImpl<T>& o) {
        const T g = static_cast<T>(o.grad[0] * inv_n);
        for (std::size_t i = 0; i < ai->values.size(); ++i) {
          const T d = ai->values[i] - bi->values[i];
          const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
          if (ai->requires_grad) {
            detail::ensure_grad(*ai);
            ai->grad[i] += s;
          }
          if (bi->requires_grad) {
            detail::ensure_grad(*bi);
            bi->grad[i] -= s;
          }
        }
      });
}

template <typename T>
Tensor<T> l2_loss(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("l2_loss", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = double(av[i]) - double(bv[i]);
    acc += d * d;
  }
  const double inv_n = 1.0 / double(a.numel());
  auto ai = a.impl_;
  auto bi = b.impl_;
  return detail::make_from_op<T>(
      "l2_loss", kScalarShape, {static_cast<T>(acc * inv_n)}, {a, b},
      [ai, bi, inv_n](detail::TensorImpl<T>& o) {
        const T g = static_cast<T>(o.grad[0] * inv_n);
        for (std::size_t i = 0; i < ai->values.size(); ++i) {
          const T d2 = T(2) * (ai->values[i] - bi->values[i]);
          if (ai->requires_grad) {
            detail::ensure_grad(*ai);
            ai->grad[i] += g * d2;
          }
          if (bi->requires_grad) {
            detail::ensure_grad(*bi);
            bi->grad[i] -= g * d2;
          }
        }
      });
}

#define NIBKIT_INSTANTIATE_OPS(T)                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> affine(const Tensor<T>&, T, T);                               \
  template Tensor<T> relu(const Tensor<T>&);                                       \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                    \
  template Tensor<T> tanh(const Tensor<T>&);                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> dct2(const Tensor<T>&);                                       \
  template Tensor<T> idct2(const Tensor<T>&);                                      \
  template Tensor<T> gaussian_blur(const Tensor<T>&, double, int);                 \
  template Tensor<T> upsample_nearest2(const Tensor<T>&);                          \
  template Tensor<T> instance_norm(const Tensor<T>&, T);                           \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> narrow_batch(const Tensor<T>&, int);                          \
  template Tensor<T> sum_all(const Tensor<T>&);                                    \
  template Tensor<T> mean_all(const Tensor<T>&);                                   \
  template Tensor<T> mean_abs(const Tensor<T>&);                                   \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> l2_loss(const Tensor<T>&, const Tensor<T>&);

NIBKIT_INSTANTIATE_OPS(float)
NIBKIT_INSTANTIATE_OPS(double)
#undef NIBKIT_INSTANTIATE_OPS

}  // namespace nibkit
