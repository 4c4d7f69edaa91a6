#pragma once

// Fully connected CRF over an image grid with a bilateral (position + colour)
// kernel and a spatial smoothness kernel, solved by parallel mean-field
// updates with Potts compatibility.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ssdd/image.hpp"
#include "ssdd/numkern/loss.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

struct CrfParams {
  double w_g = 3.0;            // bilateral kernel weight
  double w_rgb = 10.0;         // spatial smoothness kernel weight
  double theta_alpha = 80.0;   // bilateral spatial bandwidth
  double theta_beta = 13.0;    // bilateral colour bandwidth
  double theta_gamma = 3.0;    // smoothness spatial bandwidth
  std::size_t iterations = 5;
  // Skip pixel pairs beyond the distance at which both Gaussian kernels fall
  // below kWindowTolerance of their weight.
  bool windowed = false;

  static constexpr double kWindowTolerance = 1e-12;

  std::size_t window_radius() const {
    auto reach = [](double weight, double theta) {
      if (!(weight > 0.0)) return 0.0;
      const double ratio = weight / kWindowTolerance;
      return ratio > 1.0 ? theta * std::sqrt(2.0 * std::log(ratio)) : 0.0;
    };
    return static_cast<std::size_t>(std::ceil(std::max(reach(w_g, theta_alpha), reach(w_rgb, theta_gamma))));
  }

  void validate() const {
    if (!(theta_alpha > 0) || !(theta_beta > 0) || !(theta_gamma > 0)) {
      throw InvalidInput("CrfParams: bandwidths must be positive");
    }
    if (iterations == 0) throw InvalidInput("CrfParams: iterations must be positive");
  }
};

struct PixelPos {
  std::size_t y = 0;
  std::size_t x = 0;
};

/// Kernel value k(f_i, f_j) between two pixels of `img`.
inline double pairwise_potential(PixelPos i, PixelPos j, const Image& img, const CrfParams& params) {
  const double dy = static_cast<double>(i.y) - static_cast<double>(j.y);
  const double dx = static_cast<double>(i.x) - static_cast<double>(j.x);
  const double pos2 = dx * dx + dy * dy;
  double col2 = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double d = img.at(i.y, i.x, c) - img.at(j.y, j.x, c);
    col2 += d * d;
  }
  const double a2 = 2.0 * params.theta_alpha * params.theta_alpha;
  const double b2 = 2.0 * params.theta_beta * params.theta_beta;
  const double g2 = 2.0 * params.theta_gamma * params.theta_gamma;
  return params.w_g * std::exp(-pos2 / a2 - col2 / b2) + params.w_rgb * std::exp(-pos2 / g2);
}

namespace detail {

// Largest grid for which the dense kernel matrix is cached between iterations.
inline constexpr std::size_t kCrfCachedPixels = 2048;

class CrfKernel {
 public:
  CrfKernel(const Image& img, const CrfParams& params) : img_(img), params_(params) {
    n_ = img.pixels();
    if (!params.windowed && n_ <= kCrfCachedPixels) {
      cache_.assign(n_ * n_, 0.0);
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = i + 1; j < n_; ++j) {
          const double k = value(i, j);
          cache_[i * n_ + j] = k;
          cache_[j * n_ + i] = k;
        }
      }
    }
  }

  // Writes m[i * C + l] = sum_{j != i} k(i, j) * q[j * C + l].
  void messages(const std::vector<double>& q, std::size_t channels, std::vector<double>& m) const {
    std::fill(m.begin(), m.end(), 0.0);
    std::vector<double> row(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double* mi = m.data() + i * channels;
      if (params_.windowed) {
        const std::size_t r = params_.window_radius();
        const std::size_t yi = i / img_.width, xi = i % img_.width;
        const std::size_t y0 = yi > r ? yi - r : 0, y1 = std::min(img_.height - 1, yi + r);
        const std::size_t x0 = xi > r ? xi - r : 0, x1 = std::min(img_.width - 1, xi + r);
        for (std::size_t y = y0; y <= y1; ++y) {
          for (std::size_t x = x0; x <= x1; ++x) {
            const std::size_t j = y * img_.width + x;
            if (j == i) continue;
            const double k = value(i, j);
            for (std::size_t l = 0; l < channels; ++l) mi[l] += k * q[j * channels + l];
          }
        }
        continue;
      }
      const double* krow = nullptr;
      if (!cache_.empty()) {
        krow = cache_.data() + i * n_;
      } else {
        for (std::size_t j = 0; j < n_; ++j) row[j] = j == i ? 0.0 : value(i, j);
        krow = row.data();
      }
      for (std::size_t j = 0; j < n_; ++j) {
        if (j == i) continue;
        const double k = krow[j];
        for (std::size_t l = 0; l < channels; ++l) mi[l] += k * q[j * channels + l];
      }
    }
  }

 private:
  double value(std::size_t i, std::size_t j) const {
    return pairwise_potential({i / img_.width, i % img_.width}, {j / img_.width, j % img_.width},
                              img_, params_);
  }

  const Image& img_;
  CrfParams params_;
  std::size_t n_ = 0;
  std::vector<double> cache_;
};

}  // namespace detail

/// Mean-field refinement of a per-pixel distribution p ([C, H, W]).
///
/// Unaries are -log(max(p, eps)) and Q starts at p. Each iteration computes
/// m_i(l) = sum_{j != i} k(i, j) Q_j(l) and sets
/// Q_i(l) proportional to exp(-u_i(l) - sum_{l' != l} m_i(l')).
/// When `iterates` is given, every intermediate Q is appended to it.
inline Tensor crf_refine(const Tensor& p, const Image& img, const CrfParams& params,
                         std::vector<Tensor>* iterates = nullptr) {
  params.validate();
  require_rank(p, 3, "crf_refine");
  if (p.dim(1) != img.height || p.dim(2) != img.width) {
    throw InvalidInput("crf_refine: probability map " + shape_string(p.shape()) +
                       " does not match image " + std::to_string(img.height) + "x" +
                       std::to_string(img.width));
  }
  const std::size_t channels = p.dim(0), n = img.pixels();
  if (channels == 0) throw InvalidInput("crf_refine: no classes");
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t l = 0; l < channels; ++l) {
      const double v = p[l * n + i];
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InvalidInput("crf_refine: negative or non-finite probability at pixel " +
                           std::to_string(i));
      }
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-4) {
      throw InvalidInput("crf_refine: probabilities at pixel " + std::to_string(i) +
                         " sum to " + std::to_string(total));
    }
  }

  // Pixel-major working layout.
  std::vector<double> unary(n * channels), q(n * channels), m(n * channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < channels; ++l) {
      const double v = p[l * n + i];
      unary[i * channels + l] = -std::log(std::max(v, kLogEpsilon));
      q[i * channels + l] = v;
    }
  }

  const detail::CrfKernel kernel(img, params);
  std::vector<double> logits(channels);
  auto to_tensor = [&] {
    Tensor out({channels, img.height, img.width});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < channels; ++l) out[l * n + i] = q[i * channels + l];
    }
    return out;
  };

  for (std::size_t it = 0; it < params.iterations; ++it) {
    kernel.messages(q, channels, m);
    for (std::size_t i = 0; i < n; ++i) {
      const double* mi = m.data() + i * channels;
      double all = 0.0;
      for (std::size_t l = 0; l < channels; ++l) all += mi[l];
      double peak = -HUGE_VAL;
      for (std::size_t l = 0; l < channels; ++l) {
        logits[l] = -unary[i * channels + l] - (all - mi[l]);
        peak = std::max(peak, logits[l]);
      }
      double z = 0.0;
      for (std::size_t l = 0; l < channels; ++l) {
        // Floor keeps every probability strictly positive in double precision.
        logits[l] = std::exp(std::max(logits[l] - peak, -700.0));
        z += logits[l];
      }
      for (std::size_t l = 0; l < channels; ++l) q[i * channels + l] = logits[l] / z;
    }
    if (iterates) iterates->push_back(to_tensor());
  }
  return to_tensor();
}

}  // namespace ssdd
