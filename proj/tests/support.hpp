#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "ssdd/masks.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline LabelMask random_mask(std::size_t h, std::size_t w, int classes, std::mt19937_64& rng) {
  LabelMask m(h, w);
  std::uniform_int_distribution<int> u(0, classes - 1);
  for (auto& v : m.labels) v = static_cast<ClassId>(u(rng));
  return m;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Central differences of `loss` with respect to every entry of `x`,
/// returned as ||analytic - numeric|| / ||numeric||.
inline double fd_relative_error(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                                double step = 1e-6) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = loss();
    x[i] = keep - step;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
    ref2 += numeric * numeric;
  }
  if (ref2 == 0.0) return std::sqrt(diff2);
  return std::sqrt(diff2 / ref2);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ssdd-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ssdd::test
