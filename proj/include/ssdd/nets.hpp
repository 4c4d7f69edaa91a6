#pragma once

// Network definitions: a small two-headed segmentation network that also
// provides low/high level embedding features, and the difference detection
// network (DD-Net) that predicts per-pixel agreement from those features and
// a one-hot mask.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ssdd/image.hpp"
#include "ssdd/masks.hpp"
#include "ssdd/numkern.hpp"

namespace ssdd {

template <typename T>
using ParamList = std::vector<BasicTensor<T>*>;

template <typename T>
using GradList = std::vector<BasicTensor<T>>;

/// A named snapshot of one network's parameters.
template <typename T>
struct ParamSet {
  std::string name;
  std::vector<BasicTensor<T>> tensors;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

template <typename T>
ParamSet<T> snapshot(std::string name, const ParamList<T>& params) {
  ParamSet<T> out{std::move(name), {}};
  for (const auto* p : params) out.tensors.push_back(*p);
  return out;
}

template <typename T>
void restore(const ParamList<T>& params, const ParamSet<T>& set) {
  if (set.tensors.size() != params.size()) {
    throw InvalidInput("parameter set '" + set.name + "' has " +
                       std::to_string(set.tensors.size()) + " tensors, network expects " +
                       std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k]->shape(), set.tensors[k].shape(),
                       ("parameter set '" + set.name + "'").c_str());
    *params[k] = set.tensors[k];
  }
}

/// Embedding features handed to the DD-Net, both at working resolution.
template <typename T>
struct FeaturePair {
  BasicTensor<T> e_low;
  BasicTensor<T> e_high;
};

// ---- segmentation network ---------------------------------------------------------

struct SegNetConfig {
  std::size_t num_classes = 6;  // including background
  std::array<std::size_t, 4> widths{16, 32, 32, 64};
};

template <typename T>
struct SegForward {
  BasicTensor<T> input;
  std::array<BasicTensor<T>, 4> acts;  // post-ReLU encoder outputs
  BasicTensor<T> probs_main_lo, probs_sub_lo;
  BasicTensor<T> p_main, p_sub;  // working resolution
  FeaturePair<T> feats;
};

template <typename T>
struct SegGrads {
  GradList<T> encoder, main, sub;
};

/// Four 3x3 conv+ReLU blocks (strides 1, 2, 1, 2), then two 1x1 heads with
/// softmax and 2x bilinear upsampling. The low-level tap follows block 1 and
/// the high-level tap follows block 4; both are resized to the working
/// resolution (input / 2).
template <typename T>
class SegNetToy {
 public:
  static constexpr std::array<std::size_t, 4> kStrides{1, 2, 1, 2};

  SegNetToy() = default;
  SegNetToy(const SegNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    std::size_t in = 3;
    for (std::size_t b = 0; b < 4; ++b) {
      encoder_[b] = ConvLayer<T>(in, cfg.widths[b], 3, kStrides[b], 1);
      init_uniform(encoder_[b], rng);
      in = cfg.widths[b];
    }
    main_ = ConvLayer<T>(in, cfg.num_classes, 1);
    sub_ = ConvLayer<T>(in, cfg.num_classes, 1);
    init_uniform(main_, rng);
    init_uniform(sub_, rng);
  }

  const SegNetConfig& config() const { return cfg_; }
  std::size_t low_channels() const { return cfg_.widths[0]; }
  std::size_t high_channels() const { return cfg_.widths[3]; }

  ParamList<T> encoder_params() {
    ParamList<T> out;
    for (auto& l : encoder_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }
  ParamList<T> main_params() { return {&main_.weights, &main_.bias}; }
  ParamList<T> sub_params() { return {&sub_.weights, &sub_.bias}; }

  /// Re-initializes the sub head as a copy of the main head.
  void copy_main_to_sub() { sub_ = main_; }

  SegForward<T> forward(const BasicTensor<T>& x) const {
    require_rank(x, 3, "seg_forward");
    if (x.dim(0) != 3 || x.dim(1) % 4 != 0 || x.dim(2) % 4 != 0 || x.dim(1) == 0 || x.dim(2) == 0) {
      throw InvalidInput("seg_forward: input must be [3, H, W] with H, W positive multiples of 4, got " +
                         shape_string(x.shape()));
    }
    const std::size_t wh = x.dim(1) / 2, ww = x.dim(2) / 2;
    SegForward<T> f;
    f.input = x;
    const BasicTensor<T>* in = &x;
    for (std::size_t b = 0; b < 4; ++b) {
      f.acts[b] = relu_forward(conv2d_forward(*in, encoder_[b]));
      in = &f.acts[b];
    }
    f.probs_main_lo = softmax_forward(conv2d_forward(f.acts[3], main_));
    f.probs_sub_lo = softmax_forward(conv2d_forward(f.acts[3], sub_));
    f.p_main = bilinear_resize(f.probs_main_lo, wh, ww);
    f.p_sub = bilinear_resize(f.probs_sub_lo, wh, ww);
    f.feats.e_low = bilinear_resize(f.acts[0], wh, ww);
    f.feats.e_high = bilinear_resize(f.acts[3], wh, ww);
    return f;
  }

  /// Backpropagates gradients on the working-resolution probability maps.
  /// Either gradient may be empty, meaning that head receives no loss.
  SegGrads<T> backward(const SegForward<T>& f, const BasicTensor<T>& grad_p_main,
                       const BasicTensor<T>& grad_p_sub) const {
    SegGrads<T> g;
    BasicTensor<T> grad_top(f.acts[3].shape());
    auto head = [&](const ConvLayer<T>& layer, const BasicTensor<T>& probs_lo,
                    const BasicTensor<T>& grad_p, GradList<T>& out) {
      if (grad_p.empty()) {
        out = {BasicTensor<T>(layer.weights.shape()), BasicTensor<T>(layer.bias.shape())};
        return;
      }
      const auto grad_lo = bilinear_resize_backward(grad_p, probs_lo.dim(1), probs_lo.dim(2));
      const auto grad_logits = softmax_backward(probs_lo, grad_lo);
      auto cg = conv2d_backward(f.acts[3], layer, grad_logits);
      add_into(grad_top, cg.input);
      out = {std::move(cg.weights), std::move(cg.bias)};
    };
    head(main_, f.probs_main_lo, grad_p_main, g.main);
    head(sub_, f.probs_sub_lo, grad_p_sub, g.sub);

    g.encoder.resize(8);
    BasicTensor<T> grad = std::move(grad_top);
    for (std::size_t b = 4; b-- > 0;) {
      const auto grad_pre = relu_backward(f.acts[b], grad);
      const BasicTensor<T>& in = b == 0 ? f.input : f.acts[b - 1];
      auto cg = conv2d_backward(in, encoder_[b], grad_pre, b > 0);
      g.encoder[2 * b] = std::move(cg.weights);
      g.encoder[2 * b + 1] = std::move(cg.bias);
      grad = std::move(cg.input);
    }
    return g;
  }

 private:
  SegNetConfig cfg_;
  std::array<ConvLayer<T>, 4> encoder_;
  ConvLayer<T> main_, sub_;
};

// ---- difference detection network ---------------------------------------------------

struct DDNetConfig {
  std::size_t mask_channels = 6;  // one-hot classes including background
  std::size_t low_channels = 16;
  std::size_t high_channels = 64;
  std::size_t branch_width = 32;
};

template <typename T>
struct DDForward {
  BasicTensor<T> b_mask, b_low, b_high;  // post-ReLU branch outputs
  BasicTensor<T> h0;                     // concatenated branches
  BasicTensor<T> r1;                     // post-ReLU first residual conv
  BasicTensor<T> h1;                     // post-ReLU residual sum
  BasicTensor<T> d;                      // [H, W] confidence in (0, 1)
};

/// Three 3x3 conv+ReLU branches (mask, low features, high features) whose
/// outputs are channel-concatenated, one residual block of two 3x3 convs, and
/// a 1x1 conv + sigmoid head producing a single-channel map.
template <typename T>
class DDNet {
 public:
  DDNet() = default;
  DDNet(const DDNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    const std::size_t w = cfg.branch_width, trunk = 3 * w;
    mask_ = ConvLayer<T>(cfg.mask_channels, w, 3, 1, 1);
    low_ = ConvLayer<T>(cfg.low_channels, w, 3, 1, 1);
    high_ = ConvLayer<T>(cfg.high_channels, w, 3, 1, 1);
    res1_ = ConvLayer<T>(trunk, trunk, 3, 1, 1);
    res2_ = ConvLayer<T>(trunk, trunk, 3, 1, 1);
    head_ = ConvLayer<T>(trunk, 1, 1);
    for (auto* l : layers()) init_uniform(*l, rng);
  }

  const DDNetConfig& config() const { return cfg_; }

  ParamList<T> parameters() {
    ParamList<T> out;
    for (auto* l : layers()) {
      out.push_back(&l->weights);
      out.push_back(&l->bias);
    }
    return out;
  }

  GradList<T> zero_grads() const {
    GradList<T> out;
    for (const auto* l : layers()) {
      out.emplace_back(l->weights.shape());
      out.emplace_back(l->bias.shape());
    }
    return out;
  }

  DDForward<T> forward(const FeaturePair<T>& feats, const BasicTensor<T>& mask_onehot) const {
    require_rank(mask_onehot, 3, "ddnet_forward");
    require_rank(feats.e_low, 3, "ddnet_forward e_low");
    require_rank(feats.e_high, 3, "ddnet_forward e_high");
    if (mask_onehot.dim(0) != cfg_.mask_channels || feats.e_low.dim(0) != cfg_.low_channels ||
        feats.e_high.dim(0) != cfg_.high_channels) {
      throw InvalidInput("ddnet_forward: channel counts " + shape_string(mask_onehot.shape()) +
                         ", " + shape_string(feats.e_low.shape()) + ", " +
                         shape_string(feats.e_high.shape()) + " do not match the network");
    }
    DDForward<T> f;
    f.b_mask = relu_forward(conv2d_forward(mask_onehot, mask_));
    f.b_low = relu_forward(conv2d_forward(feats.e_low, low_));
    f.b_high = relu_forward(conv2d_forward(feats.e_high, high_));
    f.h0 = concat_channels<T>({&f.b_mask, &f.b_low, &f.b_high});
    f.r1 = relu_forward(conv2d_forward(f.h0, res1_));
    auto sum = conv2d_forward(f.r1, res2_);
    add_into(sum, f.h0);
    f.h1 = relu_forward(sum);
    auto d = sigmoid_forward(conv2d_forward(f.h1, head_));
    f.d = BasicTensor<T>({d.dim(1), d.dim(2)}, std::move(d.storage()));
    return f;
  }

  /// Parameter gradients for a loss gradient on the confidence map. Inputs
  /// (features and masks) are treated as constants.
  GradList<T> backward(const DDForward<T>& f, const FeaturePair<T>& feats,
                       const BasicTensor<T>& mask_onehot, const BasicTensor<T>& grad_d) const {
    require_same_shape(grad_d.shape(), f.d.shape(), "ddnet_backward");
    const std::size_t h = f.d.dim(0), w = f.d.dim(1), bw = cfg_.branch_width;
    BasicTensor<T> d3({1, h, w}, f.d.storage());
    BasicTensor<T> g3({1, h, w}, grad_d.storage());
    const auto grad_logit = sigmoid_backward(d3, g3);

    auto head = conv2d_backward(f.h1, head_, grad_logit);
    const auto grad_sum = relu_backward(f.h1, head.input);
    auto res2 = conv2d_backward(f.r1, res2_, grad_sum);
    const auto grad_r1 = relu_backward(f.r1, res2.input);
    auto res1 = conv2d_backward(f.h0, res1_, grad_r1);
    auto grad_h0 = grad_sum;  // skip connection
    add_into(grad_h0, res1.input);

    auto branch = [&](const ConvLayer<T>& layer, const BasicTensor<T>& input,
                      const BasicTensor<T>& out, std::size_t offset) {
      const auto g = relu_backward(out, slice_channels(grad_h0, offset, bw));
      return conv2d_backward(input, layer, g, false);
    };
    auto gm = branch(mask_, mask_onehot, f.b_mask, 0);
    auto gl = branch(low_, feats.e_low, f.b_low, bw);
    auto gh = branch(high_, feats.e_high, f.b_high, 2 * bw);

    GradList<T> out;
    for (auto* cg : {&gm, &gl, &gh, &res1, &res2, &head}) {
      out.push_back(std::move(cg->weights));
      out.push_back(std::move(cg->bias));
    }
    return out;
  }

 private:
  std::array<ConvLayer<T>*, 6> layers() { return {&mask_, &low_, &high_, &res1_, &res2_, &head_}; }
  std::array<const ConvLayer<T>*, 6> layers() const {
    return {&mask_, &low_, &high_, &res1_, &res2_, &head_};
  }

  DDNetConfig cfg_;
  ConvLayer<T> mask_, low_, high_, res1_, res2_, head_;
};

template <typename T>
DDNetConfig dd_config_for(const SegNetToy<T>& seg, std::size_t branch_width = 32) {
  return {seg.config().num_classes, seg.low_channels(), seg.high_channels(), branch_width};
}

}  // namespace ssdd
