#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "ssdd/masks.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

/// Floor applied to probabilities before taking logarithms.
inline constexpr double kLogEpsilon = 1e-7;

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;
};

/// Mean binary cross-entropy between an agreement map and a confidence map.
///
/// The confidence is clamped into [eps, 1 - eps] before the logarithm. The
/// gradient is evaluated at the clamped value and passed straight through the
/// clamp, so saturated sigmoid outputs still receive a training signal.
template <typename T>
LossResult<T> bce(const DifferenceMap& target, const BasicTensor<T>& d) {
  require_rank(d, 2, "bce");
  if (d.dim(0) != target.height || d.dim(1) != target.width) {
    throw InvalidInput("bce: target " + std::to_string(target.height) + "x" +
                       std::to_string(target.width) + " vs confidence " + shape_string(d.shape()));
  }
  const std::size_t n = d.size();
  LossResult<T> out{0.0, BasicTensor<T>(d.shape())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    const double p = std::clamp(static_cast<double>(d[u]), kLogEpsilon, 1.0 - kLogEpsilon);
    if (target[u]) {
      total += std::log(p);
      out.grad[u] = static_cast<T>(-inv_n / p);
    } else {
      total += std::log(1.0 - p);
      out.grad[u] = static_cast<T>(inv_n / (1.0 - p));
    }
  }
  out.value = -total * inv_n;
  return out;
}

/// Segmentation cross-entropy of a per-pixel distribution h ([C, H, W])
/// against a label mask, averaged over non-ignored pixels. A mask with every
/// pixel ignored yields loss 0 and a zero gradient.
template <typename T>
LossResult<T> cross_entropy_seg(const BasicTensor<T>& h, const LabelMask& m,
                                ClassId ignore_label = kIgnoreLabel) {
  require_rank(h, 3, "cross_entropy_seg");
  if (h.dim(1) != m.height || h.dim(2) != m.width) {
    throw InvalidInput("cross_entropy_seg: mask " + std::to_string(m.height) + "x" +
                       std::to_string(m.width) + " vs probabilities " + shape_string(h.shape()));
  }
  const std::size_t channels = h.dim(0), plane = m.size();
  LossResult<T> out{0.0, BasicTensor<T>(h.shape())};
  std::size_t counted = 0;
  for (std::size_t u = 0; u < plane; ++u) {
    const ClassId c = m[u];
    if (c == ignore_label) continue;
    if (c >= channels) {
      throw InvalidInput("cross_entropy_seg: label " + std::to_string(c) + " outside " +
                         std::to_string(channels) + " classes");
    }
    ++counted;
  }
  if (counted == 0) return out;
  const double inv_s = 1.0 / static_cast<double>(counted);
  double total = 0.0;
  for (std::size_t u = 0; u < plane; ++u) {
    const ClassId c = m[u];
    if (c == ignore_label) continue;
    const double p = std::max(static_cast<double>(h[c * plane + u]), kLogEpsilon);
    total += std::log(p);
    out.grad[c * plane + u] = static_cast<T>(-inv_s / p);
  }
  out.value = -total * inv_s;
  return out;
}

}  // namespace ssdd
