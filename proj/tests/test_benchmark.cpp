// Measured behaviour on the 200-sample synthetic benchmark (seed 42). Slow:
// one 10-epoch static run shared by every test, plus 100 dynamic steps.

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "ssdd/eval.hpp"
#include "ssdd/pipeline.hpp"

using namespace ssdd;

namespace {

struct Benchmark {
  std::vector<SampleRecord> data;
  std::vector<StaticPair> pairs;
  StaticTrainResult trained;
  std::vector<LabelMask> fused;
};

const Benchmark& benchmark() {
  static const std::unique_ptr<Benchmark> b = [] {
    auto out = std::make_unique<Benchmark>();
    out->data = generate(WorldSpec{}, 200, 42);
    StaticStageConfig cfg;
    out->pairs = make_static_pairs(out->data, cfg.crf);
    out->trained = static_stage_train(out->data, cfg, &out->pairs);
    out->fused = static_refine(out->trained.model, out->data, out->pairs, cfg.bias);
    return out;
  }();
  return *b;
}

double mean_of(const std::vector<DynamicLosses>& steps, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += steps[i].total();
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST(Benchmark, DifferenceLossHalvesOverStaticTraining) {
  // From the untrained DD-Net (first batch) to the mean of the last epoch.
  const auto& r = benchmark().trained;
  ASSERT_EQ(r.epochs.size(), 10u);
  ASSERT_LT(r.steps.front().excluded, 8u);
  const double start = r.steps.front().l_diff, first_epoch = r.epochs.front().l_diff, last = r.epochs.back().l_diff;
  RecordProperty("l_diff0_first_step", std::to_string(start));
  RecordProperty("l_diff0_first_epoch", std::to_string(first_epoch));
  RecordProperty("l_diff0_last_epoch", std::to_string(last));
  EXPECT_LT(last, 0.5 * start);
  EXPECT_LT(last, first_epoch);
}

TEST(Benchmark, MainHeadFollowsTheSeeds) {
  const auto& b = benchmark();
  std::vector<LabelMask> preds, seeds;
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    preds.push_back(predict_main(b.trained.model.seg, b.data[i]));
    seeds.push_back(upsample_nearest(b.pairs[i].knowledge, kWorkingScale));
  }
  const double miou = iou_report(preds, seeds, class_count_of(b.data) - 1).mean_iou;
  RecordProperty("main_vs_seeds_miou", std::to_string(miou));
  EXPECT_GT(miou, 0.6);
}

TEST(Benchmark, DynamicLossFallsOverTheFirstHundredSteps) {
  const auto& b = benchmark();
  DynamicStageConfig cfg;
  cfg.epochs = 4;  // 25 steps per epoch at batch 8
  auto model = DynamicModel::from_static(b.trained.model, cfg.dd_width, cfg.seed);
  const auto result = train_dynamic(model, b.data, b.fused, cfg);
  ASSERT_EQ(result.steps.size(), 100u);
  for (const auto& s : result.steps) ASSERT_TRUE(std::isfinite(s.total()));
  const double head = mean_of(result.steps, 0, 25), tail = mean_of(result.steps, 75, 100);
  RecordProperty("l_dynamic_first_25", std::to_string(head));
  RecordProperty("l_dynamic_last_25", std::to_string(tail));
  EXPECT_LT(tail, head);
}
