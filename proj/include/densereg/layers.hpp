#pragma once

// Convolution, ReLU and bilinear upsampling with their backward passes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "densereg/common.hpp"
#include "densereg/tensor.hpp"

namespace densereg {

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t channels, height, width, kh, kw, out_h, out_w;
  int stride, dilation, pad_y, pad_x;
};

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec) {
  if (x.rank() != 3 || w.rank() != 4) throw InvalidInput("conv2d: expected (C,H,W) input and (O,I,kh,kw) weights");
  if (w.dim(1) != x.dim(0))
    throw InvalidInput("conv2d: weight input channels " + std::to_string(w.dim(1)) + " != input channels " +
                       std::to_string(x.dim(0)));
  if (w.dim(2) % 2 == 0 || w.dim(3) % 2 == 0) throw InvalidInput("conv2d: kernel size must be odd");
  if (spec.stride < 1 || spec.dilation < 1) throw InvalidInput("conv2d: stride and dilation must be >= 1");
  ConvGeometry g{};
  g.channels = x.dim(0);
  g.height = x.dim(1);
  g.width = x.dim(2);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.stride = spec.stride;
  g.dilation = spec.dilation;
  g.pad_y = spec.dilation * static_cast<int>(g.kh - 1) / 2;
  g.pad_x = spec.dilation * static_cast<int>(g.kw - 1) / 2;
  g.out_h = (g.height + spec.stride - 1) / spec.stride;
  g.out_w = (g.width + spec.stride - 1) / spec.stride;
  return g;
}

// Column matrix of shape (C*kh*kw, out_h*out_w); out-of-image taps read 0.
template <class T>
void im2col(const Tensor<T>& x, const ConvGeometry& g, AlignedVector<T>& col) {
  const std::size_t cols = g.out_h * g.out_w;
  col.assign(g.channels * g.kh * g.kw * cols, T(0));
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++r) {
        T* dst = col.data() + r * cols;
        const long dy = static_cast<long>(ky) * g.dilation - g.pad_y;
        const long dx = static_cast<long>(kx) * g.dilation - g.pad_x;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride + dy;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const T* src = x.data() + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride + dx;
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[oy * g.out_w + ox] = src[ix];
          }
        }
      }
}

template <class T>
void col2im(const AlignedVector<T>& col, const ConvGeometry& g, Tensor<T>& dx) {
  const std::size_t cols = g.out_h * g.out_w;
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++r) {
        const T* src = col.data() + r * cols;
        const long dy = static_cast<long>(ky) * g.dilation - g.pad_y;
        const long ddx = static_cast<long>(kx) * g.dilation - g.pad_x;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride + dy;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = dx.data() + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride + ddx;
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace detail

/// Zero-padded cross-correlation; stride 1 preserves spatial size and
/// stride s produces ceil(H/s) x ceil(W/s).
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& spec = {}) {
  const auto g = detail::conv_geometry(x, w, spec);
  const std::size_t out_c = w.dim(0);
  if (b.size() != out_c) throw InvalidInput("conv2d: bias length does not match output channels");
  Tensor<T> y({out_c, g.out_h, g.out_w});
  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t inner = g.channels * g.kh * g.kw;
  detail::MatMap<T> ym(y.data(), out_c, cols);
  detail::ConstMatMap<T> wm(w.data(), out_c, inner);
  if (g.kh == 1 && g.kw == 1 && g.stride == 1) {
    ym.noalias() = wm * detail::ConstMatMap<T>(x.data(), inner, cols);
  } else {
    AlignedVector<T> col;
    detail::im2col(x, g, col);
    ym.noalias() = wm * detail::ConstMatMap<T>(col.data(), inner, cols);
  }
  for (std::size_t o = 0; o < out_c; ++o) ym.row(o).array() += b[o];
  return y;
}

template <class T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, const ConvSpec& spec = {},
                             bool need_dx = true) {
  const auto g = detail::conv_geometry(x, w, spec);
  const std::size_t out_c = w.dim(0);
  if (dy.rank() != 3 || dy.dim(0) != out_c || dy.dim(1) != g.out_h || dy.dim(2) != g.out_w)
    throw InvalidInput("conv2d_backward: output gradient has shape " + shape_string(dy.shape()));
  const std::size_t cols = g.out_h * g.out_w;
  const std::size_t inner = g.channels * g.kh * g.kw;
  ConvGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({out_c})};
  detail::ConstMatMap<T> dym(dy.data(), out_c, cols);
  detail::ConstMatMap<T> wm(w.data(), out_c, inner);
  detail::MatMap<T> dwm(out.dw.data(), out_c, inner);
  const bool direct = g.kh == 1 && g.kw == 1 && g.stride == 1;
  AlignedVector<T> col;
  if (direct) {
    dwm.noalias() = dym * detail::ConstMatMap<T>(x.data(), inner, cols).transpose();
  } else {
    detail::im2col(x, g, col);
    dwm.noalias() = dym * detail::ConstMatMap<T>(col.data(), inner, cols).transpose();
  }
  for (std::size_t o = 0; o < out_c; ++o) {
    T s = T(0);
    for (std::size_t j = 0; j < cols; ++j) s += dy[o * cols + j];
    out.db[o] = s;
  }
  if (need_dx) {
    if (direct) {
      detail::MatMap<T>(out.dx.data(), inner, cols).noalias() = wm.transpose() * dym;
    } else {
      detail::MatMap<T>(col.data(), inner, cols).noalias() = wm.transpose() * dym;
      detail::col2im(col, g, out.dx);
    }
  }
  return out;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

/// Gradient through ReLU given its forward output (or input).
template <class T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
  return dx;
}

namespace detail {

struct InterpTap {
  std::size_t i0, i1;
  double w1;
};

// Half-pixel source coordinates (i + 0.5) / f - 0.5, clamped to the input.
inline std::vector<InterpTap> upsample_taps(std::size_t in, std::size_t factor) {
  std::vector<InterpTap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    taps[o] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

template <class T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int factor) {
  if (factor < 1) throw InvalidInput("bilinear_upsample: factor must be >= 1");
  if (x.rank() != 3) throw InvalidInput("bilinear_upsample: expected (C,H,W)");
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (f == 1) return x;
  const auto ty = detail::upsample_taps(H, f);
  const auto tx = detail::upsample_taps(W, f);
  Tensor<T> y({C, H * f, W * f});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < H * f; ++oy) {
      const auto& a = ty[oy];
      const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
      for (std::size_t ox = 0; ox < W * f; ++ox) {
        const auto& b = tx[ox];
        const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
        y.at(c, oy, ox) = wy0 * (wx0 * x.at(c, a.i0, b.i0) + wx1 * x.at(c, a.i0, b.i1)) +
                          wy1 * (wx0 * x.at(c, a.i1, b.i0) + wx1 * x.at(c, a.i1, b.i1));
      }
    }
  return y;
}

/// Transpose of bilinear_upsample applied to dy.
template <class T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& dy, const std::vector<std::size_t>& input_shape, int factor) {
  if (factor < 1) throw InvalidInput("bilinear_upsample: factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t C = input_shape.at(0), H = input_shape.at(1), W = input_shape.at(2);
  if (dy.rank() != 3 || dy.dim(0) != C || dy.dim(1) != H * f || dy.dim(2) != W * f)
    throw InvalidInput("bilinear_upsample_backward: gradient shape mismatch");
  if (f == 1) return dy;
  const auto ty = detail::upsample_taps(H, f);
  const auto tx = detail::upsample_taps(W, f);
  Tensor<T> dx(input_shape);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < H * f; ++oy) {
      const auto& a = ty[oy];
      const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
      for (std::size_t ox = 0; ox < W * f; ++ox) {
        const auto& b = tx[ox];
        const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
        const T g = dy.at(c, oy, ox);
        dx.at(c, a.i0, b.i0) += wy0 * wx0 * g;
        dx.at(c, a.i0, b.i1) += wy0 * wx1 * g;
        dx.at(c, a.i1, b.i0) += wy1 * wx0 * g;
        dx.at(c, a.i1, b.i1) += wy1 * wx1 * g;
      }
    }
  return dx;
}

}  // namespace densereg
