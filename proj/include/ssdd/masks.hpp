#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ssdd/tensor.hpp"

namespace ssdd {

using ClassId = std::uint8_t;

inline constexpr ClassId kBackground = 0;
inline constexpr ClassId kIgnoreLabel = 255;

/// Per-pixel class index mask, row-major.
struct LabelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ClassId> labels;

  LabelMask() = default;
  LabelMask(std::size_t h, std::size_t w, ClassId fill = kBackground)
      : height(h), width(w), labels(h * w, fill) {}

  std::size_t size() const noexcept { return labels.size(); }
  ClassId& operator()(std::size_t y, std::size_t x) noexcept { return labels[y * width + x]; }
  ClassId operator()(std::size_t y, std::size_t x) const noexcept { return labels[y * width + x]; }
  ClassId& operator[](std::size_t i) noexcept { return labels[i]; }
  ClassId operator[](std::size_t i) const noexcept { return labels[i]; }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// Binary agreement map: 1 where two masks carry the same label.
struct DifferenceMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  DifferenceMap() = default;
  DifferenceMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  std::uint8_t operator[](std::size_t i) const noexcept { return values[i]; }

  friend bool operator==(const DifferenceMap&, const DifferenceMap&) = default;
};

/// Image-level foreground labels. Background is implicit and never stored.
struct LabelSet {
  std::set<ClassId> classes;

  LabelSet() = default;
  LabelSet(std::initializer_list<ClassId> init) : classes(init) {}
  explicit LabelSet(std::set<ClassId> init) : classes(std::move(init)) {}

  bool contains(ClassId c) const { return classes.count(c) != 0; }
  bool empty() const noexcept { return classes.empty(); }
  std::size_t size() const noexcept { return classes.size(); }
  auto begin() const { return classes.begin(); }
  auto end() const { return classes.end(); }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

inline void require_same_dims(const LabelMask& a, const LabelMask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw InvalidInput(std::string(what) + ": mask dimensions differ (" +
                       std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                       std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

/// Count of pixels per label value (256 bins).
inline std::vector<std::size_t> class_histogram(const LabelMask& m) {
  std::vector<std::size_t> counts(256, 0);
  for (ClassId v : m.labels) ++counts[v];
  return counts;
}

/// Foreground labels present in a mask (ignore label excluded).
inline LabelSet foreground_labels(const LabelMask& m) {
  LabelSet out;
  const auto counts = class_histogram(m);
  for (std::size_t c = 1; c < 255; ++c) {
    if (counts[c] > 0) out.classes.insert(static_cast<ClassId>(c));
  }
  return out;
}

/// One-hot [num_classes, H, W] encoding; ignore pixels encode as all zeros.
template <typename T>
BasicTensor<T> one_hot(const LabelMask& m, std::size_t num_classes) {
  BasicTensor<T> out({num_classes, m.height, m.width});
  const std::size_t plane = m.height * m.width;
  for (std::size_t i = 0; i < plane; ++i) {
    const ClassId c = m.labels[i];
    if (c == kIgnoreLabel) continue;
    if (c >= num_classes) {
      throw InvalidInput("one_hot: label " + std::to_string(c) + " exceeds class count " +
                         std::to_string(num_classes));
    }
    out[c * plane + i] = T{1};
  }
  return out;
}

/// Unrestricted per-pixel argmax over channels; ties go to the lower index.
template <typename T>
LabelMask argmax_channels(const BasicTensor<T>& p) {
  require_rank(p, 3, "argmax_channels");
  const std::size_t channels = p.dim(0), h = p.dim(1), w = p.dim(2), plane = h * w;
  LabelMask out(h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < channels; ++c) {
      if (p[c * plane + i] > p[best * plane + i]) best = c;
    }
    out.labels[i] = static_cast<ClassId>(best);
  }
  return out;
}

/// Nearest-neighbour replication by an integer factor.
inline LabelMask upsample_nearest(const LabelMask& m, std::size_t factor) {
  LabelMask out(m.height * factor, m.width * factor);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out(y, x) = m(y / factor, x / factor);
  }
  return out;
}

/// Picks the top-left pixel of every factor x factor block. Inverts
/// upsample_nearest exactly.
inline LabelMask downsample_nearest(const LabelMask& m, std::size_t factor) {
  if (factor == 0 || m.height % factor != 0 || m.width % factor != 0) {
    throw InvalidInput("downsample_nearest: dimensions not divisible by factor");
  }
  LabelMask out(m.height / factor, m.width / factor);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out(y, x) = m(y * factor, x * factor);
  }
  return out;
}

inline LabelMask flip_horizontal(const LabelMask& m) {
  LabelMask out(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) out(y, x) = m(y, m.width - 1 - x);
  }
  return out;
}

}  // namespace ssdd
