#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>

#include "ssdd/tensor.hpp"

namespace ssdd {

/// 2-D convolution with square-or-rectangular odd kernels.
template <typename T>
struct ConvLayer {
  BasicTensor<T> weights;  // [out_ch, in_ch, kh, kw]
  BasicTensor<T> bias;     // [out_ch]
  std::size_t stride = 1;
  std::size_t padding = 0;

  ConvLayer() = default;
  ConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride_ = 1,
            std::size_t padding_ = 0)
      : weights({out_ch, in_ch, kernel, kernel}),
        bias({out_ch}),
        stride(stride_),
        padding(padding_) {
    validate();
  }

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel_h() const { return weights.dim(2); }
  std::size_t kernel_w() const { return weights.dim(3); }
  std::size_t fan_in() const { return in_channels() * kernel_h() * kernel_w(); }

  std::size_t output_size(std::size_t in, std::size_t kernel) const {
    return (in + 2 * padding - kernel) / stride + 1;
  }

  void validate() const {
    if (weights.rank() != 4 || bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
      throw InvalidInput("ConvLayer: weights must be [out,in,kh,kw] and bias [out]");
    }
    if (kernel_h() % 2 == 0 || kernel_w() % 2 == 0) {
      throw InvalidInput("ConvLayer: kernel sizes must be odd");
    }
    if (stride == 0) throw InvalidInput("ConvLayer: stride must be positive");
  }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t in_ch, in_h, in_w, kh, kw, stride, pad, out_h, out_w;
  std::size_t rows() const { return in_ch * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const ConvLayer<T>& layer,
                           const char* what) {
  layer.validate();
  require_rank(input, 3, what);
  if (input.dim(0) != layer.in_channels()) {
    throw InvalidInput(std::string(what) + ": input has " + std::to_string(input.dim(0)) +
                       " channels, layer expects " + std::to_string(layer.in_channels()));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), layer.kernel_h(), layer.kernel_w(),
                 layer.stride, layer.padding, 0, 0};
  if (g.in_h + 2 * g.pad < g.kh || g.in_w + 2 * g.pad < g.kw) {
    throw InvalidInput(std::string(what) + ": input smaller than kernel");
  }
  g.out_h = layer.output_size(g.in_h, g.kh);
  g.out_w = layer.output_size(g.in_w, g.kw);
  return g;
}

// cols[(c*kh + ky)*kw + kx, oy*out_w + ox] = input[c, oy*s + ky - pad, ox*s + kx - pad]
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = input + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? T{0}
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst = input + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            dst[static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace detail

/// Convolution of a [C_in, H, W] input. Returns [C_out, H_out, W_out].
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvLayer<T>& layer) {
  using Mat = detail::RowMatrix<T>;
  const auto g = detail::conv_geometry(input, layer, "conv2d_forward");
  const auto out_ch = static_cast<Eigen::Index>(layer.out_channels());
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());

  BasicTensor<T> out({layer.out_channels(), g.out_h, g.out_w});
  Eigen::Map<const Mat> w(layer.weights.data(), out_ch, rows);
  Eigen::Map<Mat> o(out.data(), out_ch, cols);
  if (detail::is_pointwise(g)) {
    o.noalias() = w * Eigen::Map<const Mat>(input.data(), rows, cols);
  } else {
    Mat patches(rows, cols);
    detail::im2col(input.data(), g, patches.data());
    o.noalias() = w * patches;
  }
  for (Eigen::Index c = 0; c < out_ch; ++c) o.row(c).array() += layer.bias[c];
  return out;
}

/// Gradients of conv2d_forward with respect to its input, weights and bias.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvLayer<T>& layer,
                             const BasicTensor<T>& grad_out, bool need_input_grad = true) {
  using Mat = detail::RowMatrix<T>;
  const auto g = detail::conv_geometry(input, layer, "conv2d_backward");
  require_same_shape(grad_out.shape(), Shape{layer.out_channels(), g.out_h, g.out_w},
                     "conv2d_backward grad_out");
  const auto out_ch = static_cast<Eigen::Index>(layer.out_channels());
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());

  ConvGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(layer.weights.shape()),
                     BasicTensor<T>(layer.bias.shape())};
  Eigen::Map<const Mat> go(grad_out.data(), out_ch, cols);
  for (Eigen::Index c = 0; c < out_ch; ++c) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < cols; ++i) acc += static_cast<double>(go(c, i));
    grads.bias[static_cast<std::size_t>(c)] = static_cast<T>(acc);
  }

  Eigen::Map<const Mat> w(layer.weights.data(), out_ch, rows);
  Eigen::Map<Mat> gw(grads.weights.data(), out_ch, rows);
  if (detail::is_pointwise(g)) {
    Eigen::Map<const Mat> patches(input.data(), rows, cols);
    gw.noalias() = go * patches.transpose();
    if (need_input_grad) {
      Eigen::Map<Mat>(grads.input.data(), rows, cols).noalias() = w.transpose() * go;
    }
    return grads;
  }
  Mat patches(rows, cols);
  detail::im2col(input.data(), g, patches.data());
  gw.noalias() = go * patches.transpose();
  if (need_input_grad) {
    patches.noalias() = w.transpose() * go;
    detail::col2im(patches.data(), g, grads.input.data());
  }
  return grads;
}

}  // namespace ssdd
