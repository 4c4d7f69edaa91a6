#pragma once

// Two-stage refinement: a static stage that trains the embedding network and
// a DD-Net on (seed, CRF(seed)) pairs and fuses them once, and a dynamic stage
// that regenerates pseudo-labels inside the segmentation training loop with two
// further DD-Nets and an auxiliary sub head.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ssdd/benchdata.hpp"
#include "ssdd/core.hpp"
#include "ssdd/densecrf.hpp"
#include "ssdd/fileio.hpp"
#include "ssdd/masks.hpp"
#include "ssdd/nets.hpp"
#include "ssdd/numkern.hpp"
#include "ssdd/parallel.hpp"

namespace ssdd {

/// Ratio between the input size and the working resolution of masks,
/// features and confidence maps.
inline constexpr std::size_t kWorkingScale = 2;

/// Per-pixel argmax restricted to background plus the image labels. Ties go
/// to the smaller class index.
template <typename T>
LabelMask present_label_argmax(const BasicTensor<T>& p, const LabelSet& labels) {
  require_rank(p, 3, "present_label_argmax");
  const std::size_t channels = p.dim(0), plane = p.dim(1) * p.dim(2);
  std::vector<std::size_t> allowed{kBackground};
  for (ClassId c : labels) {
    if (c < channels) allowed.push_back(c);
  }
  LabelMask out(p.dim(1), p.dim(2));
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = kBackground;
    for (std::size_t c : allowed) {
      if (p[c * plane + i] > p[best * plane + i]) best = c;
    }
    out.labels[i] = static_cast<ClassId>(best);
  }
  return out;
}

/// Restricts a mask to background plus the image labels.
inline bool labels_within(const LabelMask& m, const LabelSet& labels) {
  return std::all_of(m.labels.begin(), m.labels.end(),
                     [&](ClassId c) { return c == kBackground || labels.contains(c); });
}

// ---- configuration -------------------------------------------------------------------

struct StaticLossWeights {
  double base = 1.0;
  double diff = 1.0;
};

struct StaticStageConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double base_lr = 0.25;
  BiasParams bias;
  CrfParams crf;
  ExclusionQuantifier quantifier = ExclusionQuantifier::All;
  std::size_t dd_width = 32;
  std::uint64_t seed = 42;
  bool flip = true;
  StaticLossWeights weights;
};

struct DynamicLossWeights {
  double main = 1.0;
  double sub = 1.0;
  double diff1 = 1.0;
  double diff2 = 1.0;
};

struct DynamicStageConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double alpha = 0.5;
  double base_lr = 0.05;
  BiasParams bias;
  CrfParams crf;
  ExclusionQuantifier quantifier = ExclusionQuantifier::All;
  std::size_t dd_width = 32;
  std::uint64_t seed = 42;
  bool flip = true;
  DynamicLossWeights weights;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("DynamicStageConfig: alpha must be in [0, 1]");
  }
};

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  return (n + batch - 1) / batch;
}

// ---- prepared samples ------------------------------------------------------------------

/// Everything the training loops need about one record at working resolution.
struct WorkingSample {
  std::string id;
  LabelSet labels;
  BasicTensor<float> input;  // [3, H, W] network input
  Image image_lo;            // working-resolution image for the CRF
  LabelMask gt;              // full resolution, evaluation only
};

inline WorkingSample make_working_sample(const SampleRecord& r) {
  if (r.image.height % 4 != 0 || r.image.width % 4 != 0) {
    throw InvalidInput("record " + r.id + ": image dimensions must be multiples of 4");
  }
  return {r.id, r.labels, image_to_tensor<float>(r.image), block_mean_downsample(r.image, kWorkingScale),
          r.gt};
}

/// Knowledge (seed argmax) and advice (CRF of the seed) at working resolution.
struct StaticPair {
  LabelMask knowledge;
  LabelMask advice;
};

inline StaticPair make_static_pair(const SampleRecord& r, const CrfParams& crf) {
  const Tensor seed_lo = block_mean_downsample(r.seed_prob, kWorkingScale);
  const Image image_lo = block_mean_downsample(r.image, kWorkingScale);
  return {present_label_argmax(seed_lo, r.labels),
          present_label_argmax(crf_refine(seed_lo, image_lo, crf), r.labels)};
}

inline std::vector<StaticPair> make_static_pairs(const std::vector<SampleRecord>& data, const CrfParams& crf) {
  return parallel_map(data.size(), [&](std::size_t i) { return make_static_pair(data[i], crf); });
}

inline std::size_t class_count_of(const std::vector<SampleRecord>& data) {
  if (data.empty()) throw InvalidInput("empty dataset");
  const std::size_t channels = data.front().seed_prob.dim(0);
  for (const auto& r : data) {
    if (r.seed_prob.dim(0) != channels) throw InvalidInput("records disagree on the class count");
  }
  return channels;
}

// ---- models ------------------------------------------------------------------------------

struct StaticModel {
  SegNetToy<float> seg;
  DDNet<float> dd0;

  std::vector<ParamSet<float>> param_sets() {
    return {snapshot("encoder", seg.encoder_params()), snapshot("base", seg.main_params()),
            snapshot("dd0", dd0.parameters())};
  }

  static StaticModel create(std::size_t num_classes, std::size_t dd_width, std::uint64_t seed) {
    Rng rng(seed);
    StaticModel m;
    m.seg = SegNetToy<float>(SegNetConfig{num_classes}, rng);
    m.dd0 = DDNet<float>(dd_config_for(m.seg, dd_width), rng);
    return m;
  }

  static StaticModel load(const std::vector<ParamSet<float>>& sets, std::size_t num_classes,
                          const std::string& source) {
    const auto& dd = find_param_set(sets, "dd0", source);
    if (dd.tensors.empty() || dd.tensors.front().rank() != 4) throw IoError(source + ": malformed dd0");
    StaticModel m = create(num_classes, dd.tensors.front().dim(0), 0);
    restore(m.seg.encoder_params(), find_param_set(sets, "encoder", source));
    restore(m.seg.main_params(), find_param_set(sets, "base", source));
    restore(m.dd0.parameters(), dd);
    return m;
  }
};

struct DynamicModel {
  SegNetToy<float> seg;  // encoder, main head and sub head
  DDNet<float> dd1, dd2;

  std::vector<ParamSet<float>> param_sets() {
    return {snapshot("encoder", seg.encoder_params()), snapshot("main", seg.main_params()),
            snapshot("sub", seg.sub_params()), snapshot("dd1", dd1.parameters()),
            snapshot("dd2", dd2.parameters())};
  }

  /// Embedding and main head start from the static stage; the sub head starts
  /// as a copy of the static head; both DD-Nets are freshly initialized.
  static DynamicModel from_static(const StaticModel& st, std::size_t dd_width, std::uint64_t seed) {
    Rng rng(seed);
    DynamicModel m;
    m.seg = st.seg;
    m.seg.copy_main_to_sub();
    const auto cfg = dd_config_for(m.seg, dd_width);
    m.dd1 = DDNet<float>(cfg, rng);
    m.dd2 = DDNet<float>(cfg, rng);
    return m;
  }

  static DynamicModel load(const std::vector<ParamSet<float>>& sets, std::size_t num_classes,
                           const std::string& source) {
    const auto& dd = find_param_set(sets, "dd1", source);
    if (dd.tensors.empty() || dd.tensors.front().rank() != 4) throw IoError(source + ": malformed dd1");
    Rng rng(0);
    DynamicModel m;
    m.seg = SegNetToy<float>(SegNetConfig{num_classes}, rng);
    const auto cfg = dd_config_for(m.seg, dd.tensors.front().dim(0));
    m.dd1 = DDNet<float>(cfg, rng);
    m.dd2 = DDNet<float>(cfg, rng);
    restore(m.seg.encoder_params(), find_param_set(sets, "encoder", source));
    restore(m.seg.main_params(), find_param_set(sets, "main", source));
    restore(m.seg.sub_params(), find_param_set(sets, "sub", source));
    restore(m.dd1.parameters(), dd);
    restore(m.dd2.parameters(), find_param_set(sets, "dd2", source));
    return m;
  }
};

namespace detail {

template <typename T>
void scale_all(GradList<T>& grads, double factor) {
  for (auto& g : grads) scale_into(g, static_cast<T>(factor));
}

template <typename T>
BasicTensor<T> scaled(BasicTensor<T> t, double factor) {
  scale_into(t, static_cast<T>(factor));
  return t;
}

template <typename T>
void add_scaled(BasicTensor<T>& into, const BasicTensor<T>& g, double factor) {
  if (into.empty()) {
    into = scaled(g, factor);
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += static_cast<T>(factor) * g[i];
}

// Per-sample batch ordering; reshuffled each epoch from the stage seed.
inline std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename T>
GradList<T> sum_in_order(std::vector<GradList<T>>& parts) {
  GradList<T> total = std::move(parts.front());
  for (std::size_t k = 1; k < parts.size(); ++k) accumulate(total, parts[k]);
  return total;
}

// bce on both passes of a DD-Net plus the parameter gradients.
template <typename T>
double dd_pair_loss(const DDNet<T>& net, const FeaturePair<T>& feats, const DifferenceMap& target_a,
                    const DDForward<T>& pass_a, const BasicTensor<T>& onehot_a,
                    const DifferenceMap& target_b, const DDForward<T>& pass_b,
                    const BasicTensor<T>& onehot_b, double weight, GradList<T>& grads) {
  auto la = bce(target_a, pass_a.d);
  auto lb = bce(target_b, pass_b.d);
  grads = net.backward(pass_a, feats, onehot_a, scaled(la.grad, weight));
  accumulate(grads, net.backward(pass_b, feats, onehot_b, scaled(lb.grad, weight)));
  return la.value + lb.value;
}

}  // namespace detail

// ---- static stage ------------------------------------------------------------------------

struct StaticSampleResult {
  double l_base = 0.0;
  double l_diff = 0.0;
  bool excluded = false;
  SegGrads<float> seg;
  GradList<float> dd;
};

/// Losses and gradients of one sample: L_base (segmentation vs the knowledge
/// mask) and L_diff0 (DD-Net on both masks vs their agreement map). The
/// DD-Net loss never reaches the embedding parameters.
inline StaticSampleResult static_sample(StaticModel& model, const WorkingSample& s, const StaticPair& pair,
                                        const StaticStageConfig& cfg, bool flip) {
  StaticSampleResult r;
  const auto input = flip ? flip_horizontal(s.input) : s.input;
  const auto knowledge = flip ? flip_horizontal(pair.knowledge) : pair.knowledge;
  const auto advice = flip ? flip_horizontal(pair.advice) : pair.advice;

  const auto fwd = model.seg.forward(input);
  auto base = cross_entropy_seg(fwd.p_main, knowledge);
  r.l_base = base.value;
  r.seg = model.seg.backward(fwd, detail::scaled(base.grad, cfg.weights.base), {});

  const std::size_t classes = model.dd0.config().mask_channels;
  r.excluded = exclude_pair(knowledge, advice, s.labels, cfg.quantifier);
  if (r.excluded) {
    r.dd = model.dd0.zero_grads();
    return r;
  }
  const auto oh_k = one_hot<float>(knowledge, classes);
  const auto oh_a = one_hot<float>(advice, classes);
  const auto pass_k = model.dd0.forward(fwd.feats, oh_k);
  const auto pass_a = model.dd0.forward(fwd.feats, oh_a);
  const auto agree = difference_mask(knowledge, advice);
  r.l_diff = detail::dd_pair_loss(model.dd0, fwd.feats, agree, pass_k, oh_k, agree, pass_a, oh_a,
                                  cfg.weights.diff, r.dd);
  return r;
}

struct StaticEpochStats {
  double l_base = 0.0;     // mean over samples
  double l_diff = 0.0;     // mean over non-excluded samples
  std::size_t excluded = 0;
};

struct StaticTrainResult {
  StaticModel model;
  std::vector<StaticEpochStats> epochs;
  std::vector<StaticEpochStats> steps;  // same statistics per batch
};

/// Trains embedding + base head + DD-Net jointly with L_static = L_base + L_diff0.
inline StaticTrainResult static_stage_train(const std::vector<SampleRecord>& data,
                                            const StaticStageConfig& cfg,
                                            const std::vector<StaticPair>* pairs_in = nullptr) {
  if (data.empty()) throw InvalidInput("static_stage_train: empty dataset");
  if (cfg.batch_size == 0 || cfg.epochs == 0) throw InvalidInput("static_stage_train: zero epochs or batch");
  const std::size_t classes = class_count_of(data);
  std::vector<StaticPair> own_pairs;
  if (!pairs_in) own_pairs = make_static_pairs(data, cfg.crf);
  const auto& pairs = pairs_in ? *pairs_in : own_pairs;
  std::vector<WorkingSample> samples;
  samples.reserve(data.size());
  for (const auto& r : data) samples.push_back(make_working_sample(r));

  StaticTrainResult result{StaticModel::create(classes, cfg.dd_width, cfg.seed), {}, {}};
  auto& model = result.model;
  const std::size_t per_epoch = steps_per_epoch(data.size(), cfg.batch_size);
  const Schedule schedule{cfg.base_lr, cfg.epochs * per_epoch};
  Rng rng(cfg.seed ^ 0x5eedULL);
  std::bernoulli_distribution coin(0.5);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(data.size(), rng);
    StaticEpochStats stats;
    std::size_t diff_count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
      std::vector<char> flips(bn);
      for (auto& f : flips) f = cfg.flip && coin(rng);
      auto outs = parallel_map(bn, [&](std::size_t k) {
        const std::size_t i = order[b0 + k];
        return static_sample(model, samples[i], pairs[i], cfg, flips[k] != 0);
      });
      std::vector<GradList<float>> enc, head, dd;
      StaticEpochStats batch_stats;
      std::size_t batch_diff = 0;
      for (auto& o : outs) {
        batch_stats.l_base += o.l_base;
        if (o.excluded) {
          ++batch_stats.excluded;
        } else {
          batch_stats.l_diff += o.l_diff;
          ++batch_diff;
        }
        enc.push_back(std::move(o.seg.encoder));
        head.push_back(std::move(o.seg.main));
        dd.push_back(std::move(o.dd));
      }
      stats.l_base += batch_stats.l_base;
      stats.l_diff += batch_stats.l_diff;
      stats.excluded += batch_stats.excluded;
      diff_count += batch_diff;
      batch_stats.l_base /= static_cast<double>(bn);
      if (batch_diff) batch_stats.l_diff /= static_cast<double>(batch_diff);
      result.steps.push_back(batch_stats);
      auto g_enc = detail::sum_in_order(enc);
      auto g_head = detail::sum_in_order(head);
      auto g_dd = detail::sum_in_order(dd);
      const double inv = 1.0 / static_cast<double>(bn);
      detail::scale_all(g_enc, inv);
      detail::scale_all(g_head, inv);
      detail::scale_all(g_dd, inv);
      sgd_step<float>(model.seg.encoder_params(), g_enc, schedule, step);
      sgd_step<float>(model.seg.main_params(), g_head, schedule, step);
      sgd_step<float>(model.dd0.parameters(), g_dd, schedule, step);
      ++step;
    }
    stats.l_base /= static_cast<double>(data.size());
    if (diff_count) stats.l_diff /= static_cast<double>(diff_count);
    result.epochs.push_back(stats);
  }
  return result;
}

/// Fused masks m^D0 = SSDD(e(x), m^K0, m^A0) at working resolution.
inline std::vector<LabelMask> static_refine(const StaticModel& model, const std::vector<SampleRecord>& data,
                                            const std::vector<StaticPair>& pairs, const BiasParams& bias) {
  if (pairs.size() != data.size()) throw InvalidInput("static_refine: pair count mismatch");
  return parallel_map(data.size(), [&](std::size_t i) {
    const auto fwd = model.seg.forward(image_to_tensor<float>(data[i].image));
    return ssdd_apply(fwd.feats, pairs[i].knowledge, pairs[i].advice, model.dd0, data[i].labels, bias);
  });
}

// ---- dynamic stage -----------------------------------------------------------------------

struct DynamicLosses {
  double l_main = 0.0;
  double l_sub = 0.0;
  double l_diff1 = 0.0;
  double l_diff2 = 0.0;
  double total() const { return l_main + l_sub + l_diff1 + l_diff2; }
};

struct DynamicSampleResult {
  DynamicLosses losses;
  bool excluded = false;
  // Masks generated for this sample, all at working resolution.
  LabelMask knowledge, advice, refined1, refined2, sub;
  BasicTensor<float> score1, score2;
  SegGrads<float> seg;
  GradList<float> dd1, dd2;
};

/// One sample of the dynamic stage: main head -> CRF -> SSDD(dd1) gives m^D1,
/// SSDD(dd2) on (m^D0, m^D1) gives m^D2; main head trains on m^D2, the sub
/// head on an alpha-mix of m^D0 and m^D1, dd1 on the (m^K1, m^A1) agreement
/// and dd2 on the agreements of m^sub with m^D0 and m^D1.
inline DynamicSampleResult dynamic_sample(const DynamicModel& model, const WorkingSample& s,
                                          const LabelMask& seed, const DynamicStageConfig& cfg, bool flip) {
  DynamicSampleResult r;
  const auto input = flip ? flip_horizontal(s.input) : s.input;
  const auto image_lo = flip ? flip_horizontal(s.image_lo) : s.image_lo;
  const auto d0 = flip ? flip_horizontal(seed) : seed;
  const auto fwd = model.seg.forward(input);
  if (d0.height != fwd.p_main.dim(1) || d0.width != fwd.p_main.dim(2)) {
    throw InvalidInput("dynamic_step: seed mask for " + s.id + " is not at working resolution");
  }

  r.knowledge = present_label_argmax(fwd.p_main, s.labels);
  r.advice = present_label_argmax(crf_refine(fwd.p_main.cast<double>(), image_lo, cfg.crf), s.labels);

  const auto step1 = ssdd_fuse(fwd.feats, r.knowledge, r.advice, model.dd1, s.labels, cfg.bias);
  r.refined1 = step1.fused;
  r.score1 = step1.score;
  const auto step2 = ssdd_fuse(fwd.feats, d0, r.refined1, model.dd2, s.labels, cfg.bias);
  r.refined2 = step2.fused;
  r.score2 = step2.score;
  r.sub = present_label_argmax(fwd.p_sub, s.labels);

  auto main = cross_entropy_seg(fwd.p_main, r.refined2);
  auto sub_d0 = cross_entropy_seg(fwd.p_sub, d0);
  auto sub_d1 = cross_entropy_seg(fwd.p_sub, r.refined1);
  r.losses.l_main = main.value;
  r.losses.l_sub = cfg.alpha * sub_d0.value + (1.0 - cfg.alpha) * sub_d1.value;
  BasicTensor<float> grad_sub = detail::scaled(sub_d0.grad, cfg.alpha * cfg.weights.sub);
  detail::add_scaled(grad_sub, sub_d1.grad, (1.0 - cfg.alpha) * cfg.weights.sub);
  r.seg = model.seg.backward(fwd, detail::scaled(main.grad, cfg.weights.main), grad_sub);

  const std::size_t classes = model.dd1.config().mask_channels;
  r.excluded = exclude_pair(r.knowledge, r.advice, s.labels, cfg.quantifier);
  if (r.excluded) {
    r.dd1 = model.dd1.zero_grads();
  } else {
    const auto agree = difference_mask(r.knowledge, r.advice);
    r.losses.l_diff1 = detail::dd_pair_loss(model.dd1, fwd.feats, agree, step1.knowledge_pass,
                                            one_hot<float>(r.knowledge, classes), agree,
                                            step1.advice_pass, one_hot<float>(r.advice, classes),
                                            cfg.weights.diff1, r.dd1);
  }
  r.losses.l_diff2 = detail::dd_pair_loss(model.dd2, fwd.feats, difference_mask(d0, r.sub),
                                          step2.knowledge_pass, one_hot<float>(d0, classes),
                                          difference_mask(r.sub, r.refined1), step2.advice_pass,
                                          one_hot<float>(r.refined1, classes), cfg.weights.diff2, r.dd2);
  if (flip) {
    for (auto* m : {&r.knowledge, &r.advice, &r.refined1, &r.refined2, &r.sub}) *m = flip_horizontal(*m);
  }
  return r;
}

struct DynamicStepResult {
  DynamicLosses losses;  // batch means
  std::vector<DynamicSampleResult> samples;
};

/// One SGD step of the dynamic stage over a batch of sample indices.
inline DynamicStepResult dynamic_step(DynamicModel& model, const std::vector<WorkingSample>& samples,
                                      const std::vector<LabelMask>& seeds, const std::vector<std::size_t>& batch,
                                      const std::vector<char>& flips, const DynamicStageConfig& cfg,
                                      const Schedule& schedule, std::size_t step) {
  cfg.validate();
  if (seeds.size() != samples.size()) throw InvalidInput("dynamic_step: missing seed masks");
  if (batch.empty()) throw InvalidInput("dynamic_step: empty batch");
  DynamicStepResult out;
  out.samples = parallel_map(batch.size(), [&](std::size_t k) {
    return dynamic_sample(model, samples[batch[k]], seeds[batch[k]], cfg, !flips.empty() && flips[k]);
  });
  std::vector<GradList<float>> enc, main, sub, dd1, dd2;
  for (auto& s : out.samples) {
    out.losses.l_main += s.losses.l_main;
    out.losses.l_sub += s.losses.l_sub;
    out.losses.l_diff1 += s.losses.l_diff1;
    out.losses.l_diff2 += s.losses.l_diff2;
    enc.push_back(std::move(s.seg.encoder));
    main.push_back(std::move(s.seg.main));
    sub.push_back(std::move(s.seg.sub));
    dd1.push_back(std::move(s.dd1));
    dd2.push_back(std::move(s.dd2));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.losses.l_main *= inv;
  out.losses.l_sub *= inv;
  out.losses.l_diff1 *= inv;
  out.losses.l_diff2 *= inv;
  auto apply = [&](const ParamList<float>& params, std::vector<GradList<float>>& parts) {
    auto g = detail::sum_in_order(parts);
    detail::scale_all(g, inv);
    sgd_step<float>(params, g, schedule, step);
  };
  apply(model.seg.encoder_params(), enc);
  apply(model.seg.main_params(), main);
  apply(model.seg.sub_params(), sub);
  apply(model.dd1.parameters(), dd1);
  apply(model.dd2.parameters(), dd2);
  return out;
}

struct DynamicEpochStats {
  DynamicLosses losses;  // mean over steps
  bool all_finite = true;
  bool labels_ok = true;  // every generated mask within background + image labels
};

struct DynamicTrainResult {
  std::vector<DynamicEpochStats> epochs;
  std::vector<DynamicLosses> steps;
};

inline DynamicTrainResult train_dynamic(DynamicModel& model, const std::vector<SampleRecord>& data,
                                        const std::vector<LabelMask>& seeds, const DynamicStageConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InvalidInput("train_dynamic: empty dataset");
  if (seeds.size() != data.size()) throw InvalidInput("train_dynamic: missing seed masks");
  std::vector<WorkingSample> samples;
  samples.reserve(data.size());
  for (const auto& r : data) samples.push_back(make_working_sample(r));

  const std::size_t per_epoch = steps_per_epoch(data.size(), cfg.batch_size);
  const Schedule schedule{cfg.base_lr, cfg.epochs * per_epoch};
  Rng rng(cfg.seed ^ 0xd15cULL);
  std::bernoulli_distribution coin(0.5);
  DynamicTrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(data.size(), rng);
    DynamicEpochStats stats;
    std::size_t steps = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                     order.begin() + static_cast<std::ptrdiff_t>(b0 + bn));
      std::vector<char> flips(bn);
      for (auto& f : flips) f = cfg.flip && coin(rng);
      const auto out = dynamic_step(model, samples, seeds, batch, flips, cfg, schedule, step++);
      const auto& l = out.losses;
      stats.all_finite = stats.all_finite && std::isfinite(l.l_main) && std::isfinite(l.l_sub) &&
                         std::isfinite(l.l_diff1) && std::isfinite(l.l_diff2);
      for (std::size_t k = 0; k < bn; ++k) {
        const auto& s = out.samples[k];
        const auto& labels = samples[batch[k]].labels;
        for (const auto* m : {&s.knowledge, &s.advice, &s.refined1, &s.refined2, &s.sub}) {
          stats.labels_ok = stats.labels_ok && labels_within(*m, labels);
        }
      }
      stats.losses.l_main += l.l_main;
      stats.losses.l_sub += l.l_sub;
      stats.losses.l_diff1 += l.l_diff1;
      stats.losses.l_diff2 += l.l_diff2;
      result.steps.push_back(l);
      ++steps;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    stats.losses.l_main *= inv;
    stats.losses.l_sub *= inv;
    stats.losses.l_diff1 *= inv;
    stats.losses.l_diff2 *= inv;
    result.epochs.push_back(stats);
  }
  return result;
}

/// Main-head prediction at input resolution: probabilities are bilinearly
/// upsampled, then restricted to background plus the image labels.
inline LabelMask predict_main(const SegNetToy<float>& seg, const SampleRecord& r) {
  const auto fwd = seg.forward(image_to_tensor<float>(r.image));
  return present_label_argmax(bilinear_resize(fwd.p_main, r.image.height, r.image.width), r.labels);
}

}  // namespace ssdd
