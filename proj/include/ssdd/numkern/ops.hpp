#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ssdd/tensor.hpp"

namespace ssdd {

// ---- pointwise activations ---------------------------------------------------

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.values()) v = v > T{0} ? v : T{0};
  return y;
}

/// Uses the forward output; the subgradient at zero is taken as 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_y) {
  require_same_shape(y.shape(), grad_y.shape(), "relu_backward");
  BasicTensor<T> g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(y[i] > T{0})) g[i] = T{0};
  }
  return g;
}

template <typename T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.values()) {
    // Split on sign so exp never overflows.
    if (v >= T{0}) {
      v = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T{1} + e);
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_y) {
  require_same_shape(y.shape(), grad_y.shape(), "sigmoid_backward");
  BasicTensor<T> g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (T{1} - y[i]);
  return g;
}

/// Softmax across the channel axis of a [C, H, W] tensor.
template <typename T>
BasicTensor<T> softmax_forward(const BasicTensor<T>& logits) {
  require_rank(logits, 3, "softmax_forward");
  const std::size_t channels = logits.dim(0), plane = logits.dim(1) * logits.dim(2);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    T peak = logits[i];
    for (std::size_t c = 1; c < channels; ++c) peak = std::max(peak, logits[c * plane + i]);
    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const T e = std::exp(logits[c * plane + i] - peak);
      out[c * plane + i] = e;
      total += static_cast<double>(e);
    }
    for (std::size_t c = 0; c < channels; ++c) {
      out[c * plane + i] = static_cast<T>(static_cast<double>(out[c * plane + i]) / total);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_p) {
  require_same_shape(probs.shape(), grad_p.shape(), "softmax_backward");
  const std::size_t channels = probs.dim(0), plane = probs.dim(1) * probs.dim(2);
  BasicTensor<T> g(probs.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    double dot = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      dot += static_cast<double>(probs[c * plane + i]) * static_cast<double>(grad_p[c * plane + i]);
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t k = c * plane + i;
      g[k] = static_cast<T>(static_cast<double>(probs[k]) *
                            (static_cast<double>(grad_p[k]) - dot));
    }
  }
  return g;
}

// ---- resizing ------------------------------------------------------------------

namespace detail {

struct LinearTap {
  std::size_t lo, hi;
  double frac;  // weight of `hi`
};

// Corner-aligned sampling: output index 0 maps to input 0, the last output
// index maps to the last input.
inline std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  for (std::size_t o = 0; o < out; ++o) {
    const double src = static_cast<double>(o) * scale;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace detail

/// Separable bilinear resize of a [C, H, W] tensor to [C, out_h, out_w].
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& t, std::size_t out_h, std::size_t out_w) {
  require_rank(t, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw InvalidInput("bilinear_resize: target size must be positive");
  const std::size_t channels = t.dim(0), in_h = t.dim(1), in_w = t.dim(2);
  if (in_h == 0 || in_w == 0) throw InvalidInput("bilinear_resize: empty input");
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
  BasicTensor<T> out({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const double top = (1.0 - b.frac) * t(c, a.lo, b.lo) + b.frac * t(c, a.lo, b.hi);
        const double bottom = (1.0 - b.frac) * t(c, a.hi, b.lo) + b.frac * t(c, a.hi, b.hi);
        out(c, y, x) = static_cast<T>((1.0 - a.frac) * top + a.frac * bottom);
      }
    }
  }
  return out;
}

/// Adjoint of bilinear_resize: scatters grad_out back onto the input grid.
template <typename T>
BasicTensor<T> bilinear_resize_backward(const BasicTensor<T>& grad_out, std::size_t in_h,
                                        std::size_t in_w) {
  require_rank(grad_out, 3, "bilinear_resize_backward");
  const std::size_t channels = grad_out.dim(0), out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
  std::vector<double> acc(channels * in_h * in_w, 0.0);
  auto at = [&](std::size_t c, std::size_t y, std::size_t x) -> double& {
    return acc[(c * in_h + y) * in_w + x];
  };
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const double g = grad_out(c, y, x);
        at(c, a.lo, b.lo) += (1.0 - a.frac) * (1.0 - b.frac) * g;
        at(c, a.lo, b.hi) += (1.0 - a.frac) * b.frac * g;
        at(c, a.hi, b.lo) += a.frac * (1.0 - b.frac) * g;
        at(c, a.hi, b.hi) += a.frac * b.frac * g;
      }
    }
  }
  BasicTensor<T> out({channels, in_h, in_w});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

/// Mean over non-overlapping factor x factor blocks of a [C, H, W] tensor.
template <typename T>
BasicTensor<T> block_mean_downsample(const BasicTensor<T>& t, std::size_t factor) {
  require_rank(t, 3, "block_mean_downsample");
  if (factor == 0 || t.dim(1) % factor != 0 || t.dim(2) % factor != 0) {
    throw InvalidInput("block_mean_downsample: dimensions not divisible by factor");
  }
  const std::size_t channels = t.dim(0), oh = t.dim(1) / factor, ow = t.dim(2) / factor;
  const double norm = 1.0 / static_cast<double>(factor * factor);
  BasicTensor<T> out({channels, oh, ow});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) acc += t(c, y * factor + dy, x * factor + dx);
        }
        out(c, y, x) = static_cast<T>(acc * norm);
      }
    }
  }
  return out;
}

// ---- channel plumbing ------------------------------------------------------------

template <typename T>
BasicTensor<T> concat_channels(std::initializer_list<const BasicTensor<T>*> parts) {
  std::size_t channels = 0, h = 0, w = 0;
  for (const auto* p : parts) {
    require_rank(*p, 3, "concat_channels");
    if (channels == 0) {
      h = p->dim(1);
      w = p->dim(2);
    } else if (p->dim(1) != h || p->dim(2) != w) {
      throw InvalidInput("concat_channels: spatial sizes differ");
    }
    channels += p->dim(0);
  }
  BasicTensor<T> out({channels, h, w});
  std::size_t offset = 0;
  for (const auto* p : parts) {
    std::copy(p->values().begin(), p->values().end(), out.values().begin() + offset);
    offset += p->size();
  }
  return out;
}

/// Copies channels [begin, begin + count) into a new tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t begin, std::size_t count) {
  require_rank(t, 3, "slice_channels");
  if (begin + count > t.dim(0)) throw InvalidInput("slice_channels: range out of bounds");
  const std::size_t plane = t.dim(1) * t.dim(2);
  BasicTensor<T> out({count, t.dim(1), t.dim(2)});
  std::copy_n(t.values().begin() + begin * plane, count * plane, out.values().begin());
  return out;
}

template <typename T>
BasicTensor<T> flip_horizontal(const BasicTensor<T>& t) {
  require_rank(t, 3, "flip_horizontal");
  BasicTensor<T> out(t.shape());
  const std::size_t w = t.dim(2);
  for (std::size_t c = 0; c < t.dim(0); ++c) {
    for (std::size_t y = 0; y < t.dim(1); ++y) {
      for (std::size_t x = 0; x < w; ++x) out(c, y, x) = t(c, y, w - 1 - x);
    }
  }
  return out;
}

}  // namespace ssdd
