#pragma once

// Self-supervised difference detection: agreement maps, class-failure tests,
// bias maps, confidence scores and knowledge/advice fusion.

#include <cstddef>
#include <vector>

#include "ssdd/masks.hpp"
#include "ssdd/nets.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

inline constexpr double kFailingRatio = 0.5;

struct BiasParams {
  double b_dd = 0.4;
  double b_class = 1.0;
};

/// How the per-class shrink test combines over the image labels when deciding
/// whether a knowledge/advice pair is a bad training sample.
enum class ExclusionQuantifier { All, Any };

/// 1 where the two masks agree, 0 elsewhere.
inline DifferenceMap difference_mask(const LabelMask& knowledge, const LabelMask& advice) {
  require_same_dims(knowledge, advice, "difference_mask");
  DifferenceMap out(knowledge.height, knowledge.width);
  for (std::size_t u = 0; u < knowledge.size(); ++u) {
    out.values[u] = knowledge[u] == advice[u] ? 1 : 0;
  }
  return out;
}

namespace detail {

// True when class c keeps less than half of its knowledge pixels in the
// advice. Classes absent from the knowledge never count as shrinking.
inline bool shrinks(std::size_t knowledge_count, std::size_t advice_count) {
  if (knowledge_count == 0) return false;
  return static_cast<double>(advice_count) / static_cast<double>(knowledge_count) < kFailingRatio;
}

}  // namespace detail

/// Image labels whose advice pixel count falls below half the knowledge count.
inline LabelSet failing_classes(const LabelMask& knowledge, const LabelMask& advice,
                                const LabelSet& labels) {
  require_same_dims(knowledge, advice, "failing_classes");
  const auto kc = class_histogram(knowledge);
  const auto ac = class_histogram(advice);
  LabelSet out;
  for (ClassId c : labels) {
    if (detail::shrinks(kc[c], ac[c])) out.classes.insert(c);
  }
  return out;
}

/// Whether a pair should be left out of difference-detection training.
/// An empty label set is always excluded.
inline bool exclude_pair(const LabelMask& knowledge, const LabelMask& advice, const LabelSet& labels,
                         ExclusionQuantifier quantifier = ExclusionQuantifier::All) {
  require_same_dims(knowledge, advice, "exclude_pair");
  if (labels.empty()) return true;
  const auto kc = class_histogram(knowledge);
  const auto ac = class_histogram(advice);
  std::size_t failing = 0;
  for (ClassId c : labels) failing += detail::shrinks(kc[c], ac[c]) ? 1 : 0;
  return quantifier == ExclusionQuantifier::All ? failing == labels.size() : failing > 0;
}

/// Per-pixel bias: b_dd, lowered by b_class where the knowledge label is a
/// failing class (favouring knowledge), raised by b_class where the advice
/// label is failing (favouring advice), and b_dd again if both are failing.
template <typename T = double>
BasicTensor<T> bias_map(const LabelMask& knowledge, const LabelMask& advice, const LabelSet& failing,
                        const BiasParams& bp) {
  require_same_dims(knowledge, advice, "bias_map");
  BasicTensor<T> out({knowledge.height, knowledge.width}, static_cast<T>(bp.b_dd));
  for (std::size_t u = 0; u < knowledge.size(); ++u) {
    const bool k_fail = failing.contains(knowledge[u]);
    const bool a_fail = failing.contains(advice[u]);
    if (k_fail && !a_fail) {
      out[u] = static_cast<T>(bp.b_dd - bp.b_class);
    } else if (a_fail && !k_fail) {
      out[u] = static_cast<T>(bp.b_dd + bp.b_class);
    }
  }
  return out;
}

/// w = d_knowledge - d_advice + bias.
template <typename T>
BasicTensor<T> confidence_score(const BasicTensor<T>& d_knowledge, const BasicTensor<T>& d_advice,
                                const BasicTensor<T>& bias) {
  require_same_shape(d_knowledge.shape(), d_advice.shape(), "confidence_score");
  require_same_shape(d_knowledge.shape(), bias.shape(), "confidence_score bias");
  BasicTensor<T> w(d_knowledge.shape());
  for (std::size_t u = 0; u < w.size(); ++u) w[u] = d_knowledge[u] - d_advice[u] + bias[u];
  return w;
}

/// Takes the advice label where w >= 0 and the knowledge label elsewhere.
template <typename T>
LabelMask fuse_masks(const LabelMask& knowledge, const LabelMask& advice, const BasicTensor<T>& w) {
  require_same_dims(knowledge, advice, "fuse_masks");
  if (w.size() != knowledge.size() || w.rank() != 2 || w.dim(0) != knowledge.height) {
    throw InvalidInput("fuse_masks: score map " + shape_string(w.shape()) + " does not match masks");
  }
  LabelMask out = knowledge;
  for (std::size_t u = 0; u < out.size(); ++u) {
    if (w[u] >= T{0}) out[u] = advice[u];
  }
  return out;
}

/// Intermediate results of one SSDD fusion, kept for training and inspection.
template <typename T>
struct SsddResult {
  LabelMask fused;
  DDForward<T> knowledge_pass, advice_pass;
  LabelSet failing;
  BasicTensor<T> score;
};

template <typename T>
SsddResult<T> ssdd_fuse(const FeaturePair<T>& feats, const LabelMask& knowledge, const LabelMask& advice,
                        const DDNet<T>& net, const LabelSet& labels, const BiasParams& bp) {
  require_same_dims(knowledge, advice, "ssdd_apply");
  const std::size_t classes = net.config().mask_channels;
  SsddResult<T> r;
  r.knowledge_pass = net.forward(feats, one_hot<T>(knowledge, classes));
  r.advice_pass = net.forward(feats, one_hot<T>(advice, classes));
  r.failing = failing_classes(knowledge, advice, labels);
  r.score = confidence_score(r.knowledge_pass.d, r.advice_pass.d,
                             bias_map<T>(knowledge, advice, r.failing, bp));
  r.fused = fuse_masks(knowledge, advice, r.score);
  return r;
}

/// Refined mask from a knowledge/advice pair using a trained DD-Net.
template <typename T>
LabelMask ssdd_apply(const FeaturePair<T>& feats, const LabelMask& knowledge, const LabelMask& advice,
                     const DDNet<T>& net, const LabelSet& labels, const BiasParams& bp) {
  return ssdd_fuse(feats, knowledge, advice, net, labels, bp).fused;
}

}  // namespace ssdd
