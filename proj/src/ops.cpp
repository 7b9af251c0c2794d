#include "vcead/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vcead::ops {
namespace {

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
void require_rank(const char* op, const char* name, const Tensor<T>& t,
                  std::size_t rank) {
  if (!t.defined()) fail(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    fail(op, std::string(name) + " must have rank " + std::to_string(rank) +
                 ", got shape " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
  }
}

// Row-major GEMM kernels. All accumulate into C.

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  constexpr std::size_t kLanes = 8;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc[kLanes] = {};
      std::size_t p = 0;
      for (; p + kLanes <= k; p += kLanes) {
        for (std::size_t u = 0; u < kLanes; ++u) acc[u] += arow[p + u] * brow[p + u];
      }
      T total = T(0);
      for (; p < k; ++p) total += arow[p] * brow[p];
      for (std::size_t u = 0; u < kLanes; ++u) total += acc[u];
      c[i * n + j] += total;
    }
  }
}

// C[M x N] += A[K x M]^T * B[K x N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  long stride, padding;
};

// Range of output columns whose input column ox*stride - pad + kx is in
// [0, width).
inline void valid_range(long width, long out_w, long stride, long pad, long kx,
                        long& lo, long& hi) {
  const long first = pad - kx;
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const long last = width - 1 + pad - kx;
  hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  const long oh = static_cast<long>(g.out_h), ow = static_cast<long>(g.out_w);
  const long k = static_cast<long>(g.kernel);
  T* row = cols;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx, row += oh * ow) {
        long lo, hi;
        valid_range(w, ow, g.stride, g.padding, kx, lo, hi);
        for (long oy = 0; oy < oh; ++oy) {
          T* dst = row + oy * ow;
          const long iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          std::fill(dst, dst + lo, T(0));
          std::fill(dst + hi, dst + ow, T(0));
          const T* src = plane + iy * w - g.padding + kx;
          for (long ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  const long oh = static_cast<long>(g.out_h), ow = static_cast<long>(g.out_w);
  const long k = static_cast<long>(g.kernel);
  const T* row = cols;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (long ky = 0; ky < k; ++ky) {
      for (long kx = 0; kx < k; ++kx, row += oh * ow) {
        long lo, hi;
        valid_range(w, ow, g.stride, g.padding, kx, lo, hi);
        for (long oy = 0; oy < oh; ++oy) {
          const long iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + oy * ow;
          T* dst = plane + iy * w - g.padding + kx;
          for (long ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

void check_conv_params(const char* op, ConvParams p) {
  if (p.stride <= 0) fail(op, "stride must be positive, got " + std::to_string(p.stride));
  if (p.padding < 0) fail(op, "padding must be non-negative, got " + std::to_string(p.padding));
}

template <typename T>
void check_bias(const char* op, const Tensor<T>& bias, std::size_t n) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != n) {
    fail(op, "bias shape " + shape_str(bias.shape()) + " does not match " +
                 std::to_string(n) + " outputs");
  }
}

template <typename T>
std::vector<Tensor<T>> with_optional(std::vector<Tensor<T>> inputs,
                                     const Tensor<T>& maybe) {
  if (maybe.defined()) inputs.push_back(maybe);
  return inputs;
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, int stride,
                            int padding) {
  const long span = static_cast<long>(in) + 2L * padding - static_cast<long>(kernel);
  if (stride <= 0 || span < 0) return 0;
  return static_cast<std::size_t>(span / stride + 1);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, ConvParams params) {
  constexpr const char* op = "conv2d";
  check_conv_params(op, params);
  require_rank(op, "input", x, 4);
  require_rank(op, "weight", weight, 4);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    fail(op, "input channels " + std::to_string(cin) +
                 " do not match weight in-channels " + std::to_string(weight.dim(1)));
  }
  if (weight.dim(3) != k) fail(op, "kernel must be square, got " + shape_str(weight.shape()));
  check_bias(op, bias, cout);
  const std::size_t oh = conv_out_extent(h, k, params.stride, params.padding);
  const std::size_t ow = conv_out_extent(w, k, params.stride, params.padding);
  if (oh == 0 || ow == 0) {
    fail(op, "kernel " + std::to_string(k) + " larger than padded input " +
                 shape_str(x.shape()));
  }
  const ConvGeometry g{cin, h, w, k, oh, ow, params.stride, params.padding};
  const bool pointwise = k == 1 && params.stride == 1 && params.padding == 0;
  const std::size_t ckk = cin * k * k, pix = oh * ow;

  Tensor<T> out = Tensor<T>::zeros({n, cout, oh, ow});
  {
    auto xd = x.data();
    auto wd = weight.data();
    auto od = out.data_mut();
    std::vector<T> cols(pointwise ? 0 : ckk * pix);
    for (std::size_t b = 0; b < n; ++b) {
      const T* xb = xd.data() + b * cin * h * w;
      const T* src = xb;
      if (!pointwise) {
        im2col(g, xb, cols.data());
        src = cols.data();
      }
      T* ob = od.data() + b * cout * pix;
      gemm_nn(cout, pix, ckk, wd.data(), src, ob);
      if (bias.defined()) {
        auto bd = bias.data();
        for (std::size_t c = 0; c < cout; ++c) {
          T* plane = ob + c * pix;
          for (std::size_t i = 0; i < pix; ++i) plane[i] += bd[c];
        }
      }
    }
  }

  record_op<T>(op, with_optional<T>({x, weight}, bias), out,
               [x, weight, bias, out, g, pointwise, n, cout, ckk, pix]() mutable {
    auto gout = out.grad();
    if (bias.requires_grad()) {
      auto db = bias.grad_mut();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < cout; ++c) {
          const T* gp = gout.data() + (b * cout + c) * pix;
          T acc = T(0);
          for (std::size_t i = 0; i < pix; ++i) acc += gp[i];
          db[c] += acc;
        }
    }
    if (!weight.requires_grad() && !x.requires_grad()) return;
    const std::size_t in_plane = g.channels * g.height * g.width;
    std::vector<T> cols(pointwise ? 0 : ckk * pix);
    std::vector<T> dcols(pointwise ? 0 : ckk * pix);
    auto xd = x.data();
    for (std::size_t b = 0; b < n; ++b) {
      const T* gb = gout.data() + b * cout * pix;
      if (weight.requires_grad()) {
        const T* src = xd.data() + b * in_plane;
        if (!pointwise) {
          im2col(g, src, cols.data());
          src = cols.data();
        }
        gemm_nt(cout, ckk, pix, gb, src, weight.grad_mut().data());
      }
      if (x.requires_grad()) {
        T* dxb = x.grad_mut().data() + b * in_plane;
        if (pointwise) {
          gemm_tn(ckk, pix, cout, weight.data().data(), gb, dxb);
        } else {
          std::fill(dcols.begin(), dcols.end(), T(0));
          gemm_tn(ckk, pix, cout, weight.data().data(), gb, dcols.data());
          col2im_add(g, dcols.data(), dxb);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                           const Tensor<T>& bias, ConvParams params) {
  constexpr const char* op = "depthwise_conv2d";
  check_conv_params(op, params);
  require_rank(op, "input", x, 4);
  require_rank(op, "weight", weight, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t k = weight.dim(2);
  if (weight.dim(0) != c || weight.dim(1) != 1 || weight.dim(3) != k) {
    fail(op, "weight shape " + shape_str(weight.shape()) + " must be " +
                 std::to_string(c) + "x1xKxK for input " + shape_str(x.shape()));
  }
  check_bias(op, bias, c);
  const std::size_t oh = conv_out_extent(h, k, params.stride, params.padding);
  const std::size_t ow = conv_out_extent(w, k, params.stride, params.padding);
  if (oh == 0 || ow == 0) {
    fail(op, "kernel " + std::to_string(k) + " larger than padded input " +
                 shape_str(x.shape()));
  }
  const long s = params.stride, p = params.padding;
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  const long loh = static_cast<long>(oh), low = static_cast<long>(ow);
  const long lk = static_cast<long>(k);

  // Visits (input plane offset, output plane offset, weight) triples for one
  // channel; body(out_index, in_index, kernel_index).
  auto sweep = [=](auto&& body) {
    for (long ky = 0; ky < lk; ++ky) {
      for (long kx = 0; kx < lk; ++kx) {
        long lo, hi;
        valid_range(lw, low, s, p, kx, lo, hi);
        const std::size_t ki = static_cast<std::size_t>(ky * lk + kx);
        for (long oy = 0; oy < loh; ++oy) {
          const long iy = oy * s - p + ky;
          if (iy < 0 || iy >= lh) continue;
          for (long ox = lo; ox < hi; ++ox) {
            body(static_cast<std::size_t>(oy * low + ox),
                 static_cast<std::size_t>(iy * lw + ox * s - p + kx), ki);
          }
        }
      }
    }
  };

  Tensor<T> out = Tensor<T>::zeros({n, c, oh, ow});
  {
    auto xd = x.data();
    auto wd = weight.data();
    auto od = out.data_mut();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* xp = xd.data() + (b * c + ch) * h * w;
        T* op_ = od.data() + (b * c + ch) * oh * ow;
        const T* wk = wd.data() + ch * k * k;
        sweep([&](std::size_t o, std::size_t i, std::size_t ki) { op_[o] += wk[ki] * xp[i]; });
        if (bias.defined()) {
          const T bv = bias.data()[ch];
          for (std::size_t i = 0; i < oh * ow; ++i) op_[i] += bv;
        }
      }
    }
  }

  record_op<T>(op, with_optional<T>({x, weight}, bias), out,
               [x, weight, bias, out, sweep, n, c, h, w, k, oh, ow]() mutable {
    auto gout = out.grad();
    auto xd = x.data();
    auto wd = weight.data();
    const bool gx = x.requires_grad(), gw = weight.requires_grad();
    T* dx = gx ? x.grad_mut().data() : nullptr;
    T* dw = gw ? weight.grad_mut().data() : nullptr;
    T* db = bias.requires_grad() ? bias.grad_mut().data() : nullptr;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t in_off = (b * c + ch) * h * w;
        const T* gp = gout.data() + (b * c + ch) * oh * ow;
        const T* xp = xd.data() + in_off;
        const T* wk = wd.data() + ch * k * k;
        if (db) {
          T acc = T(0);
          for (std::size_t i = 0; i < oh * ow; ++i) acc += gp[i];
          db[ch] += acc;
        }
        if (gx) {
          T* dxp = dx + in_off;
          sweep([&](std::size_t o, std::size_t i, std::size_t ki) { dxp[i] += wk[ki] * gp[o]; });
        }
        if (gw) {
          T* dwk = dw + ch * k * k;
          sweep([&](std::size_t o, std::size_t i, std::size_t ki) { dwk[ki] += gp[o] * xp[i]; });
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight,
                const Tensor<T>& bias) {
  constexpr const char* op = "dense";
  require_rank(op, "input", x, 2);
  require_rank(op, "weight", weight, 2);
  const std::size_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) {
    fail(op, "input features " + std::to_string(f) + " do not match weight " +
                 shape_str(weight.shape()));
  }
  check_bias(op, bias, o);
  Tensor<T> out = Tensor<T>::zeros({n, o});
  auto od = out.data_mut();
  gemm_nt(n, o, f, x.data().data(), weight.data().data(), od.data());
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < o; ++j) od[i * o + j] += bd[j];
  }
  record_op<T>(op, with_optional<T>({x, weight}, bias), out,
               [x, weight, bias, out, n, f, o]() mutable {
    auto gy = out.grad();
    if (x.requires_grad()) gemm_nn(n, f, o, gy.data(), weight.data().data(), x.grad_mut().data());
    if (weight.requires_grad()) gemm_tn(o, f, n, gy.data(), x.data().data(), weight.grad_mut().data());
    if (bias.requires_grad()) {
      auto db = bias.grad_mut();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < o; ++j) db[j] += gy[i * o + j];
    }
  });
  return out;
}

namespace {

// Elementwise unary op from a value function and a derivative expressed in
// terms of (input, output).
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, D d) {
  if (!x.defined()) fail(op, "input is undefined");
  std::vector<T> values(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = f(xd[i]);
  Tensor<T> out(x.shape(), std::move(values));
  record_op<T>(op, {x}, out, [x, out, d]() mutable {
    auto gy = out.grad();
    auto yd = out.data();
    auto xd = x.data();
    auto dx = x.grad_mut();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gy[i] * d(xd[i], yd[i]);
  });
  return out;
}

}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> hardswish(const Tensor<T>& x) {
  return unary<T>(
      "hardswish", x,
      [](T v) {
        if (v <= T(-3)) return T(0);
        if (v >= T(3)) return v;
        return v * (v + T(3)) / T(6);
      },
      [](T v, T) {
        if (v <= T(-3)) return T(0);
        if (v >= T(3)) return T(1);
        return (T(2) * v + T(3)) / T(6);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  constexpr const char* op = "global_avg_pool";
  require_rank(op, "input", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), pix = x.dim(2) * x.dim(3);
  if (pix == 0) fail(op, "empty spatial extent in " + shape_str(x.shape()));
  Tensor<T> out = Tensor<T>::zeros({n, c});
  auto xd = x.data();
  auto od = out.data_mut();
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = T(0);
    for (std::size_t j = 0; j < pix; ++j) acc += xd[i * pix + j];
    od[i] = acc / static_cast<T>(pix);
  }
  record_op<T>(op, {x}, out, [x, out, n, c, pix]() mutable {
    auto gy = out.grad();
    auto dx = x.grad_mut();
    const T inv = T(1) / static_cast<T>(pix);
    for (std::size_t i = 0; i < n * c; ++i) {
      const T g = gy[i] * inv;
      for (std::size_t j = 0; j < pix; ++j) dx[i * pix + j] += g;
    }
  });
  return out;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
  constexpr const char* op = "upsample_nearest";
  require_rank(op, "input", x, 4);
  if (factor <= 0) fail(op, "factor must be positive, got " + std::to_string(factor));
  const std::size_t f = static_cast<std::size_t>(factor);
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * f, ow = w * f;
  Tensor<T> out = Tensor<T>::zeros({x.dim(0), x.dim(1), oh, ow});
  auto xd = x.data();
  auto od = out.data_mut();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        od[(p * oh + oy) * ow + ox] = xd[(p * h + oy / f) * w + ox / f];
  record_op<T>(op, {x}, out, [x, out, planes, h, w, f]() mutable {
    auto gy = out.grad();
    auto dx = x.grad_mut();
    const std::size_t oh = h * f, ow = w * f;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          dx[(p * h + oy / f) * w + ox / f] += gy[(p * oh + oy) * ow + ox];
  });
  return out;
}

template <typename T>
Tensor<T> batchnorm_affine(const Tensor<T>& x, const Tensor<T>& scale_,
                           const Tensor<T>& shift) {
  constexpr const char* op = "batchnorm_affine";
  require_rank(op, "input", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), pix = x.dim(2) * x.dim(3);
  require_rank(op, "scale", scale_, 1);
  require_rank(op, "shift", shift, 1);
  if (scale_.dim(0) != c || shift.dim(0) != c) {
    fail(op, "per-channel parameters " + shape_str(scale_.shape()) + "/" +
                 shape_str(shift.shape()) + " do not match " + std::to_string(c) +
                 " channels");
  }
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data_mut();
  auto sd = scale_.data();
  auto bd = shift.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * pix;
      for (std::size_t i = 0; i < pix; ++i) od[off + i] = xd[off + i] * sd[ch] + bd[ch];
    }
  record_op<T>(op, {x, scale_, shift}, out, [x, scale_, shift, out, n, c, pix]() mutable {
    auto gy = out.grad();
    auto xd = x.data();
    auto sd = scale_.data();
    T* dx = x.requires_grad() ? x.grad_mut().data() : nullptr;
    T* ds = scale_.requires_grad() ? scale_.grad_mut().data() : nullptr;
    T* db = shift.requires_grad() ? shift.grad_mut().data() : nullptr;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t off = (b * c + ch) * pix;
        T gs = T(0), gb = T(0);
        for (std::size_t i = 0; i < pix; ++i) {
          const T g = gy[off + i];
          gs += g * xd[off + i];
          gb += g;
          if (dx) dx[off + i] += g * sd[ch];
        }
        if (ds) ds[ch] += gs;
        if (db) db[ch] += gb;
      }
  });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> values(a.numel());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = a.data()[i] + b.data()[i];
  Tensor<T> out(a.shape(), std::move(values));
  record_op<T>("add", {a, b}, out, [a, b, out]() mutable {
    auto gy = out.grad();
    for (const Tensor<T>* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto d = t->grad_mut();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> values(a.numel());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = a.data()[i] * b.data()[i];
  Tensor<T> out(a.shape(), std::move(values));
  record_op<T>("mul", {a, b}, out, [a, b, out]() mutable {
    auto gy = out.grad();
    if (a.requires_grad()) {
      auto d = a.grad_mut();
      auto bd = b.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto d = b.grad_mut();
      auto ad = a.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * ad[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  constexpr const char* op = "concat";
  if (parts.empty()) fail(op, "no inputs");
  const Shape& first = parts.front().shape();
  if (first.size() < 2) fail(op, "inputs must have rank >= 2, got " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t a = 0; ok && a < s.size(); ++a) ok = a == 1 || s[a] == first[a];
    if (!ok) fail(op, "shape " + shape_str(s) + " incompatible with " + shape_str(first));
    total += s[1];
  }
  const std::size_t n = first[0];
  const std::size_t inner = shape_numel(first) / (first[0] * first[1]);
  Shape shape = first;
  shape[1] = total;
  Tensor<T> out = Tensor<T>::zeros(shape);
  auto od = out.data_mut();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(1) * inner;
    auto pd = p.data();
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(pd.data() + b * block, block, od.data() + b * total * inner + offset);
    offset += block;
  }
  record_op<T>(op, parts, out, [parts, out, n, inner, total]() mutable {
    auto gy = out.grad();
    std::size_t offset = 0;
    for (auto& p : parts) {
      const std::size_t block = p.dim(1) * inner;
      if (p.requires_grad()) {
        auto d = p.grad_mut();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t i = 0; i < block; ++i)
            d[b * block + i] += gy[b * total * inner + offset + i];
      }
      offset += block;
    }
  });
  return out;
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gate) {
  constexpr const char* op = "channel_scale";
  require_rank(op, "input", x, 4);
  require_rank(op, "gate", gate, 2);
  const std::size_t n = x.dim(0), c = x.dim(1), pix = x.dim(2) * x.dim(3);
  if (gate.dim(0) != n || gate.dim(1) != c) {
    fail(op, "gate " + shape_str(gate.shape()) + " does not match input " +
                 shape_str(x.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xd = x.data();
  auto gd = gate.data();
  auto od = out.data_mut();
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t j = 0; j < pix; ++j) od[i * pix + j] = xd[i * pix + j] * gd[i];
  record_op<T>(op, {x, gate}, out, [x, gate, out, n, c, pix]() mutable {
    auto gy = out.grad();
    auto xd = x.data();
    auto gd = gate.data();
    T* dx = x.requires_grad() ? x.grad_mut().data() : nullptr;
    T* dg = gate.requires_grad() ? gate.grad_mut().data() : nullptr;
    for (std::size_t i = 0; i < n * c; ++i) {
      T acc = T(0);
      for (std::size_t j = 0; j < pix; ++j) {
        acc += gy[i * pix + j] * xd[i * pix + j];
        if (dx) dx[i * pix + j] += gy[i * pix + j] * gd[i];
      }
      if (dg) dg[i] += acc;
    }
  });
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  constexpr const char* op = "softmax";
  require_rank(op, "input", x, 2);
  const std::size_t n = x.dim(0), k = x.dim(1);
  if (k == 0) fail(op, "empty class axis");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data_mut();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xd.data() + i * k;
    T* orow = od.data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T z = T(0);
    for (std::size_t j = 0; j < k; ++j) z += (orow[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) orow[j] /= z;
  }
  record_op<T>(op, {x}, out, [x, out, n, k]() mutable {
    auto gy = out.grad();
    auto yd = out.data();
    auto dx = x.grad_mut();
    for (std::size_t i = 0; i < n; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < k; ++j) dot += gy[i * k + j] * yd[i * k + j];
      for (std::size_t j = 0; j < k; ++j) dx[i * k + j] += yd[i * k + j] * (gy[i * k + j] - dot);
    }
  });
  return out;
}

template <typename T>
Tensor<T> select_column(const Tensor<T>& x, std::size_t index) {
  constexpr const char* op = "select_column";
  require_rank(op, "input", x, 2);
  const std::size_t n = x.dim(0), k = x.dim(1);
  if (index >= k) fail(op, "column " + std::to_string(index) + " out of range for " + shape_str(x.shape()));
  std::vector<T> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = x.data()[i * k + index];
  Tensor<T> out(Shape{n}, std::move(values));
  record_op<T>(op, {x}, out, [x, out, n, k, index]() mutable {
    auto gy = out.grad();
    auto dx = x.grad_mut();
    for (std::size_t i = 0; i < n; ++i) dx[i * k + index] += gy[i];
  });
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  constexpr const char* op = "gather_rows";
  if (!x.defined() || x.rank() == 0) fail(op, "input must have a leading axis");
  const std::size_t n = x.dim(0);
  const std::size_t stride = n ? x.numel() / n : 0;
  for (std::size_t r : rows) {
    if (r >= n) fail(op, "row " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<T> values(rows.size() * stride);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.data().data() + rows[i] * stride, stride, values.data() + i * stride);
  Tensor<T> out(std::move(shape), std::move(values));
  record_op<T>(op, {x}, out, [x, out, rows, stride]() mutable {
    auto gy = out.grad();
    auto dx = x.grad_mut();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < stride; ++j) dx[rows[i] * stride + j] += gy[i * stride + j];
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  if (!x.defined()) fail("sum", "input is undefined");
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  record_op<T>("sum", {x}, out, [x, out]() mutable {
    const T g = out.grad()[0];
    for (T& d : x.grad_mut()) d += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (!x.defined() || x.numel() == 0) fail("mean", "input is empty");
  T acc = T(0);
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  record_op<T>("mean", {x}, out, [x, out, inv]() mutable {
    const T g = out.grad()[0] * inv;
    for (T& d : x.grad_mut()) d += g;
  });
  return out;
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& target, const Tensor<T>& prediction) {
  require_same_shape("mse_loss", target, prediction);
  const std::size_t n = target.numel();
  if (n == 0) fail("mse_loss", "empty input");
  auto td = target.data();
  auto pd = prediction.data();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pd[i] - td[i];
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  record_op<T>("mse_loss", {target, prediction}, out, [target, prediction, out, n]() mutable {
    const T g = out.grad()[0] * T(2) / static_cast<T>(n);
    auto td = target.data();
    auto pd = prediction.data();
    if (prediction.requires_grad()) {
      auto d = prediction.grad_mut();
      for (std::size_t i = 0; i < n; ++i) d[i] += g * (pd[i] - td[i]);
    }
    if (target.requires_grad()) {
      auto d = target.grad_mut();
      for (std::size_t i = 0; i < n; ++i) d[i] -= g * (pd[i] - td[i]);
    }
  });
  return out;
}

template <typename T>
Tensor<T> ce_loss(const Tensor<T>& labels, const Tensor<T>& prob) {
  constexpr const char* op = "ce_loss";
  require_rank(op, "labels", labels, 1);
  require_rank(op, "prob", prob, 1);
  require_same_shape(op, labels, prob);
  const std::size_t n = prob.numel();
  if (n == 0) fail(op, "empty input");
  const T eps = static_cast<T>(kProbabilityClamp);
  auto yd = labels.data();
  auto pd = prob.data();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T p = std::clamp(pd[i], eps, T(1) - eps);
    acc -= yd[i] * std::log(p) + (T(1) - yd[i]) * std::log(T(1) - p);
  }
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  record_op<T>(op, {prob}, out, [labels, prob, out, n, eps]() mutable {
    const T g = out.grad()[0] / static_cast<T>(n);
    auto yd = labels.data();
    auto pd = prob.data();
    auto d = prob.grad_mut();
    for (std::size_t i = 0; i < n; ++i) {
      const T p = pd[i];
      if (p <= eps || p >= T(1) - eps) continue;
      d[i] -= g * (yd[i] / p - (T(1) - yd[i]) / (T(1) - p));
    }
  });
  return out;
}

#define VCEAD_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                            ConvParams);                                              \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&,             \
                                      const Tensor<T>&, ConvParams);                  \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> relu(const Tensor<T>&);                                          \
  template Tensor<T> hardswish(const Tensor<T>&);                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                       \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                               \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int);                         \
  template Tensor<T> batchnorm_affine(const Tensor<T>&, const Tensor<T>&,             \
                                      const Tensor<T>&);                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                      \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> channel_scale(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> softmax(const Tensor<T>&);                                       \
  template Tensor<T> select_column(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);  \
  template Tensor<T> sum(const Tensor<T>&);                                           \
  template Tensor<T> mean(const Tensor<T>&);                                          \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> ce_loss(const Tensor<T>&, const Tensor<T>&);

VCEAD_INSTANTIATE_OPS(float)
VCEAD_INSTANTIATE_OPS(double)

}  // namespace vcead::ops
