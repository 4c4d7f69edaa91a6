#pragma once

// Synthetic "shape world" benchmark: coloured rectangles, circles and
// triangles on a flat background, with ground truth, image-level labels and
// corrupted soft seed maps standing in for the output of a weak seed
// generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ssdd/fileio.hpp"
#include "ssdd/image.hpp"
#include "ssdd/masks.hpp"
#include "ssdd/numkern/optim.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

struct CorruptionModel {
  int boundary_jitter = 3;              // max dilation/erosion radius per object
  int max_shift = 1;                    // max translation per object, pixels
  double small_object_erase_prob = 0.5;
  std::size_t small_object_area = 90;   // objects below this area may vanish
  double confidence_softening = 2.0;    // temperature on seed logits
  double logit_gain = 4.0;              // logit of the seed label before softening
  double logit_noise = 0.6;             // per-pixel, per-class logit noise

  /// Scales every corruption strength by `level`; 0 disables corruption.
  CorruptionModel scaled(double level) const {
    CorruptionModel c = *this;
    c.boundary_jitter = static_cast<int>(std::lround(boundary_jitter * level));
    c.max_shift = static_cast<int>(std::lround(max_shift * level));
    c.small_object_erase_prob = std::clamp(small_object_erase_prob * level, 0.0, 1.0);
    c.logit_noise = logit_noise * level;
    return c;
  }
};

struct WorldSpec {
  std::size_t image_size = 64;
  std::size_t class_count = 5;  // foreground classes; background is class 0
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 4;
  double noise_sigma = 6.0;
  CorruptionModel corruption;
};

struct SampleRecord {
  std::string id;
  Image image;
  Tensor seed_prob;  // [C+1, H, W]
  LabelSet labels;
  LabelMask gt;      // evaluation only
};

/// Flat colour of a class; background is dark grey, foreground hues are
/// spread evenly around the colour wheel.
inline std::array<double, 3> class_color(std::size_t cls, std::size_t class_count) {
  if (cls == 0) return {60.0, 60.0, 60.0};
  const double hue = 6.0 * static_cast<double>(cls - 1) / static_cast<double>(class_count);
  const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hue)) {
    case 0: rgb = {1, x, 0}; break;
    case 1: rgb = {x, 1, 0}; break;
    case 2: rgb = {0, 1, x}; break;
    case 3: rgb = {0, x, 1}; break;
    case 4: rgb = {x, 0, 1}; break;
    default: rgb = {1, 0, x}; break;
  }
  for (auto& v : rgb) v = 40.0 + 180.0 * v;
  return rgb;
}

namespace detail {

using Region = std::vector<std::uint8_t>;  // binary, row-major

inline Region draw_shape(std::size_t size, Rng& rng) {
  Region r(size * size, 0);
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::uniform_real_distribution<double> small_or_large(0.0, 1.0);
  const double s = static_cast<double>(size);
  // Roughly a third of objects are small enough to be fragile.
  const bool small = small_or_large(rng) < 0.35;
  std::uniform_real_distribution<double> extent =
      small ? std::uniform_real_distribution<double>(0.05 * s, 0.09 * s)
            : std::uniform_real_distribution<double>(0.12 * s, 0.25 * s);
  std::uniform_real_distribution<double> centre(0.15 * s, 0.85 * s);
  const double cy = centre(rng), cx = centre(rng);
  const int kind = kind_dist(rng);
  const double a = extent(rng), b = extent(rng);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double py = static_cast<double>(y) + 0.5 - cy, px = static_cast<double>(x) + 0.5 - cx;
      bool inside = false;
      if (kind == 0) {
        inside = std::abs(py) <= a && std::abs(px) <= b;
      } else if (kind == 1) {
        inside = py * py + px * px <= a * a;
      } else {
        // Upward triangle with apex at (cy - a) and base at (cy + a).
        const double t = (py + a) / (2.0 * a);
        inside = t >= 0.0 && t <= 1.0 && std::abs(px) <= b * t;
      }
      r[y * size + x] = inside ? 1 : 0;
    }
  }
  return r;
}

inline Region morph(const Region& r, std::size_t size, int radius) {
  if (radius == 0) return r;
  const bool dilate = radius > 0;
  const int rad = std::abs(radius);
  Region out(r.size(), 0);
  const int n = static_cast<int>(size);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      bool hit = !dilate;
      for (int dy = -rad; dy <= rad && hit != dilate; ++dy) {
        for (int dx = -rad; dx <= rad; ++dx) {
          if (dy * dy + dx * dx > rad * rad) continue;
          const int yy = y + dy, xx = x + dx;
          const bool v = yy >= 0 && yy < n && xx >= 0 && xx < n && r[yy * n + xx];
          if (dilate && v) {
            hit = true;
            break;
          }
          if (!dilate && !v) {
            hit = false;
            break;
          }
        }
      }
      out[y * n + x] = hit ? 1 : 0;
    }
  }
  return out;
}

inline Region shift(const Region& r, std::size_t size, int dy, int dx) {
  Region out(r.size(), 0);
  const int n = static_cast<int>(size);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int sy = y - dy, sx = x - dx;
      if (sy >= 0 && sy < n && sx >= 0 && sx < n) out[y * n + x] = r[sy * n + sx];
    }
  }
  return out;
}

inline std::string record_id(std::size_t index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

inline SampleRecord generate_one(const WorldSpec& spec, std::size_t index, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  Rng rng(seq);
  const std::size_t n = spec.image_size, classes = spec.class_count + 1;
  const auto& cm = spec.corruption;

  SampleRecord rec;
  rec.id = record_id(index);
  rec.gt = LabelMask(n, n, kBackground);
  LabelMask seed_mask(n, n, kBackground);

  std::uniform_int_distribution<std::size_t> count_dist(spec.min_shapes, spec.max_shapes);
  std::uniform_int_distribution<std::size_t> class_dist(1, spec.class_count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> jitter_dist(-cm.boundary_jitter, cm.boundary_jitter);
  std::uniform_int_distribution<int> shift_dist(-cm.max_shift, cm.max_shift);

  const std::size_t shapes = count_dist(rng);
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto cls = static_cast<ClassId>(class_dist(rng));
    const Region region = draw_shape(n, rng);
    const auto area = static_cast<std::size_t>(std::count(region.begin(), region.end(), 1));
    for (std::size_t i = 0; i < region.size(); ++i) {
      if (region[i]) rec.gt.labels[i] = cls;
    }
    // Corrupted copy of the same object for the seed.
    const int jitter = jitter_dist(rng);
    const int sy = shift_dist(rng), sx = shift_dist(rng);
    const bool erase = area < cm.small_object_area && unit(rng) < cm.small_object_erase_prob;
    if (erase) continue;
    const Region corrupted = shift(morph(region, n, jitter), n, sy, sx);
    for (std::size_t i = 0; i < corrupted.size(); ++i) {
      if (corrupted[i]) seed_mask.labels[i] = cls;
    }
  }
  rec.labels = foreground_labels(rec.gt);
  // Corruption may not introduce labels the image does not carry.
  for (auto& v : seed_mask.labels) {
    if (v != kBackground && !rec.labels.contains(v)) v = kBackground;
  }

  rec.image = Image(n, n);
  std::normal_distribution<double> pixel_noise(0.0, spec.noise_sigma);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const auto col = class_color(rec.gt(y, x), spec.class_count);
      for (std::size_t c = 0; c < 3; ++c) {
        rec.image.at(y, x, c) = std::clamp(std::round(col[c] + pixel_noise(rng)), 0.0, 255.0);
      }
    }
  }

  rec.seed_prob = Tensor({classes, n, n});
  std::normal_distribution<double> logit_noise(0.0, 1.0);
  const std::size_t plane = n * n;
  std::vector<double> logits(classes);
  for (std::size_t i = 0; i < plane; ++i) {
    double peak = -HUGE_VAL;
    for (std::size_t c = 0; c < classes; ++c) {
      const double noise = cm.logit_noise > 0 ? cm.logit_noise * logit_noise(rng) : 0.0;
      logits[c] = ((seed_mask.labels[i] == c ? cm.logit_gain : 0.0) + noise) / cm.confidence_softening;
      peak = std::max(peak, logits[c]);
    }
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - peak));
    // Stored at float precision so the file round trip is exact.
    for (std::size_t c = 0; c < classes; ++c) {
      rec.seed_prob[c * plane + i] = static_cast<float>(logits[c] / z);
    }
  }
  return rec;
}

}  // namespace detail

/// Deterministic dataset of n records for a given seed. Every record derives
/// its own RNG stream from (seed, index).
inline std::vector<SampleRecord> generate(const WorldSpec& spec, long long n, std::uint64_t seed) {
  if (n <= 0) throw InvalidInput("generate: record count must be positive");
  if (spec.image_size == 0 || spec.image_size % 4 != 0) {
    throw InvalidInput("generate: image size must be a positive multiple of 4");
  }
  if (spec.class_count == 0 || spec.class_count > 254) throw InvalidInput("generate: bad class count");
  if (spec.min_shapes == 0 || spec.min_shapes > spec.max_shapes) {
    throw InvalidInput("generate: bad shape count range");
  }
  std::vector<SampleRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    out.push_back(detail::generate_one(spec, i, seed));
  }
  return out;
}

// ---- dataset directory -------------------------------------------------------------

inline void write_dataset(const std::vector<SampleRecord>& records, const fs::path& dir) {
  std::ostringstream labels;
  for (const auto& r : records) {
    write_image(dir / "images" / (r.id + ".ppm"), r.image);
    write_mask(dir / "gt" / (r.id + ".pgm"), r.gt);
    write_probmap(dir / "seeds" / (r.id + ".spm"), r.seed_prob);
    labels << r.id;
    for (auto c : r.labels) labels << ' ' << static_cast<int>(c);
    labels << '\n';
  }
  atomic_write(dir / "labels.txt", labels.str());
}

inline std::vector<SampleRecord> read_dataset(const fs::path& dir) {
  const fs::path labels_path = dir / "labels.txt";
  std::ifstream in(labels_path);
  if (!in) throw IoError("cannot open " + labels_path.string());
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SampleRecord r;
    if (!(ls >> r.id)) throw IoError(labels_path.string() + ":" + std::to_string(line_no) + ": missing id");
    int c = 0;
    while (ls >> c) {
      if (c <= 0 || c >= 255) {
        throw IoError(labels_path.string() + ":" + std::to_string(line_no) + ": bad class " +
                      std::to_string(c));
      }
      r.labels.classes.insert(static_cast<ClassId>(c));
    }
    if (!ls.eof()) throw IoError(labels_path.string() + ":" + std::to_string(line_no) + ": malformed line");
    r.image = read_image(dir / "images" / (r.id + ".ppm"));
    r.gt = read_mask(dir / "gt" / (r.id + ".pgm"));
    r.seed_prob = read_probmap(dir / "seeds" / (r.id + ".spm"));
    if (r.gt.height != r.image.height || r.gt.width != r.image.width ||
        r.seed_prob.dim(1) != r.image.height || r.seed_prob.dim(2) != r.image.width) {
      throw IoError("record " + r.id + " in " + dir.string() + ": image, gt and seed sizes differ");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw IoError(labels_path.string() + ": no records");
  return records;
}

}  // namespace ssdd
