#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssdd/numkern/conv.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

using Rng = std::mt19937_64;

/// Cosine ramp-down from base_lr at step 0 to zero at total_steps.
struct Schedule {
  double base_lr = 1e-3;
  std::size_t total_steps = 1;

  double lr(std::size_t step) const {
    if (step >= total_steps) return 0.0;
    if (step == 0) return base_lr;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
};

/// Plain SGD update p <- p - lr(step) * g over matching parameter/gradient lists.
template <typename T>
void sgd_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>> grads,
              const Schedule& schedule, std::size_t step) {
  if (params.size() != grads.size()) {
    throw InvalidInput("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                       std::to_string(grads.size()) + " gradients");
  }
  if (step > schedule.total_steps) throw InvalidInput("sgd_step: step beyond schedule");
  const T lr = static_cast<T>(schedule.lr(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto& g = grads[k];
    require_same_shape(p.shape(), g.shape(), "sgd_step");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and bias.
template <typename T>
void init_uniform(ConvLayer<T>& layer, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& w : layer.weights.values()) w = static_cast<T>(dist(rng));
  for (auto& b : layer.bias.values()) b = static_cast<T>(dist(rng));
}

/// Zero-initialized gradient buffers shaped like a parameter list.
template <typename T>
std::vector<BasicTensor<T>> zeros_like(std::span<BasicTensor<T>* const> params) {
  std::vector<BasicTensor<T>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(p->shape());
  return out;
}

template <typename T>
void accumulate(std::vector<BasicTensor<T>>& into, const std::vector<BasicTensor<T>>& from) {
  if (into.size() != from.size()) throw InvalidInput("accumulate: gradient list size mismatch");
  for (std::size_t k = 0; k < into.size(); ++k) add_into(into[k], from[k]);
}

}  // namespace ssdd
