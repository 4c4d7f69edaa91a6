#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ssdd/tensor.hpp"

namespace ssdd {

/// RGB image with channel values in [0, 255], stored interleaved (r, g, b per pixel).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0.0) {}

  std::size_t pixels() const noexcept { return height * width; }
  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return rgb[(y * width + x) * 3 + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return rgb[(y * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

inline constexpr double kInputMean = 0.5;
inline constexpr double kInputStd = 0.25;

/// Network input layout [3, H, W]; x/255 standardized with kInputMean and kInputStd.
template <typename T>
BasicTensor<T> image_to_tensor(const Image& img) {
  BasicTensor<T> out({3, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out(c, y, x) = static_cast<T>((img.at(y, x, c) / 255.0 - kInputMean) / kInputStd);
    }
  }
  return out;
}

inline Image block_mean_downsample(const Image& img, std::size_t factor) {
  if (factor == 0 || img.height % factor != 0 || img.width % factor != 0) {
    throw InvalidInput("block_mean_downsample: image dimensions not divisible by factor");
  }
  Image out(img.height / factor, img.width / factor);
  const double norm = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) acc += img.at(y * factor + dy, x * factor + dx, c);
        }
        out.at(y, x, c) = acc * norm;
      }
    }
  }
  return out;
}

inline Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

}  // namespace ssdd
