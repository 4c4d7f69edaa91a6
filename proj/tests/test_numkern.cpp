#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ssdd/numkern.hpp"
#include "support.hpp"

using namespace ssdd;
using ssdd::test::fd_relative_error;
using ssdd::test::random_tensor;

namespace {

// Direct convolution with zero padding.
Tensor conv_oracle(const Tensor& x, const ConvLayer<double>& l) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = l.weights.dim(0), kh = l.weights.dim(2), kw = l.weights.dim(3);
  const long pad = static_cast<long>(l.padding), s = static_cast<long>(l.stride);
  const std::size_t oh = (h + 2 * l.padding - kh) / l.stride + 1;
  const std::size_t ow = (w + 2 * l.padding - kw) / l.stride + 1;
  Tensor y({cout, oh, ow});
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = l.bias[o];
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t a = 0; a < kh; ++a) {
            for (std::size_t b = 0; b < kw; ++b) {
              const long yy = static_cast<long>(i) * s + static_cast<long>(a) - pad;
              const long xx = static_cast<long>(j) * s + static_cast<long>(b) - pad;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += l.weights[((o * cin + c) * kh + a) * kw + b] *
                     x(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
          }
        }
        y(o, i, j) = acc;
      }
    }
  }
  return y;
}

ConvLayer<double> random_layer(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                               std::size_t pad, std::mt19937_64& rng) {
  ConvLayer<double> l(in, out, k, stride, pad);
  l.weights = random_tensor(l.weights.shape(), rng);
  l.bias = random_tensor(l.bias.shape(), rng);
  return l;
}

}  // namespace

TEST(Conv, ZeroInputGivesBias) {
  std::mt19937_64 rng(1);
  auto l = random_layer(1, 2, 3, 1, 1, rng);
  const auto y = conv2d_forward(Tensor({1, 3, 3}), l);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[o * 9 + i], l.bias[o]);
}

TEST(Conv, IdentityKernel) {
  std::mt19937_64 rng(2);
  ConvLayer<double> l(1, 1, 1);
  l.weights[0] = 1.0;
  const auto x = random_tensor({1, 4, 5}, rng);
  EXPECT_EQ(conv2d_forward(x, l), x);
}

TEST(Conv, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(3);
  for (std::size_t stride : {1u, 2u}) {
    const auto x = random_tensor({2, 5, 5}, rng);
    const auto l = random_layer(2, 3, 3, stride, 1, rng);
    const auto y = conv2d_forward(x, l);
    const auto ref = conv_oracle(x, l);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
  const auto x = random_tensor({4, 6, 7}, rng);
  const auto l = random_layer(4, 5, 1, 1, 0, rng);
  const auto y = conv2d_forward(x, l);
  const auto ref = conv_oracle(x, l);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv, RejectsBadShapes) {
  ConvLayer<double> l(2, 3, 3, 1, 1);
  EXPECT_THROW(conv2d_forward(Tensor({3, 4, 4}), l), InvalidInput);
  EXPECT_THROW(conv2d_forward(Tensor({4, 4}), l), InvalidInput);
  EXPECT_THROW(ConvLayer<double>(2, 3, 2, 1, 0).validate(), InvalidInput);
  const Tensor x({2, 4, 4});
  EXPECT_THROW(conv2d_backward(x, l, Tensor({3, 3, 3})), InvalidInput);
}

TEST(Conv, ZeroGradOutGivesZeroGradients) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor({2, 4, 4}, rng);
  const auto l = random_layer(2, 3, 3, 1, 1, rng);
  const auto g = conv2d_backward(x, l, Tensor({3, 4, 4}));
  for (const auto* t : {&g.input, &g.weights, &g.bias})
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, SinglePixelThroughIdentityKernel) {
  ConvLayer<double> l(1, 1, 3, 1, 1);
  l.weights[4] = 1.0;  // centre tap
  const Tensor x({1, 5, 5}, 0.3);
  Tensor gy({1, 5, 5});
  gy(0, 2, 3) = 1.5;
  const auto g = conv2d_backward(x, l, gy);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(g.input[i], i == 2 * 5 + 3 ? 1.5 : 0.0);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (std::size_t stride : {1u, 2u}) {
    auto x = random_tensor({2, 6, 6}, rng);
    auto l = random_layer(2, 3, 3, stride, 1, rng);
    const auto probe = random_tensor(conv2d_forward(x, l).shape(), rng);
    const auto loss = [&] { return test::dot(conv2d_forward(x, l), probe); };
    const auto g = conv2d_backward(x, l, probe);
    EXPECT_LT(fd_relative_error(x, g.input, loss), 1e-4);
    EXPECT_LT(fd_relative_error(l.weights, g.weights, loss), 1e-4);
    EXPECT_LT(fd_relative_error(l.bias, g.bias, loss), 1e-4);
  }
}

TEST(Conv, FloatPathAgreesWithDouble) {
  std::mt19937_64 rng(6);
  const auto x = random_tensor({3, 8, 8}, rng);
  const auto l = random_layer(3, 4, 3, 2, 1, rng);
  ConvLayer<float> lf(3, 4, 3, 2, 1);
  lf.weights = l.weights.cast<float>();
  lf.bias = l.bias.cast<float>();
  const auto yd = conv2d_forward(x, l);
  const auto yf = conv2d_forward(x.cast<float>(), lf);
  for (std::size_t i = 0; i < yd.size(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}

TEST(Activations, SoftmaxOfEqualLogitsIsUniform) {
  const auto p = softmax_forward(Tensor({4, 2, 3}, 7.0));
  for (double v : p.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Activations, SoftmaxIsStableForLargeLogits) {
  Tensor x({2, 1, 1});
  x[0] = 1000.0;
  x[1] = 999.0;
  const auto p = softmax_forward(x);
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Activations, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({3, 4, 5}, rng, -2.0, 2.0);
  for (auto& v : x.values()) {
    if (std::abs(v) < 1e-3) v = 0.5;  // keep away from the ReLU kink
  }
  const auto probe = random_tensor(x.shape(), rng);
  {
    const auto loss = [&] { return test::dot(relu_forward(x), probe); };
    EXPECT_LT(fd_relative_error(x, relu_backward(relu_forward(x), probe), loss), 1e-4);
  }
  {
    const auto loss = [&] { return test::dot(sigmoid_forward(x), probe); };
    EXPECT_LT(fd_relative_error(x, sigmoid_backward(sigmoid_forward(x), probe), loss), 1e-4);
  }
  {
    const auto loss = [&] { return test::dot(softmax_forward(x), probe); };
    EXPECT_LT(fd_relative_error(x, softmax_backward(softmax_forward(x), probe), loss), 1e-4);
  }
}

TEST(Resize, SameSizeIsIdentity) {
  std::mt19937_64 rng(8);
  const auto x = random_tensor({2, 5, 6}, rng);
  const auto y = bilinear_resize(x, 5, 6);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

TEST(Resize, RampTwoByTwoToFourByFour) {
  // Corners 0, 1 / 2, 3; corner-aligned sampling puts output (i, j) at
  // source (i/3, j/3), so value = 2 * i/3 + j/3.
  Tensor x({1, 2, 2}, std::vector<double>{0.0, 1.0, 2.0, 3.0});
  const auto y = bilinear_resize(x, 4, 4);
  const double expected[4][4] = {{0.0, 1.0 / 3, 2.0 / 3, 1.0},
                                 {2.0 / 3, 1.0, 4.0 / 3, 5.0 / 3},
                                 {4.0 / 3, 5.0 / 3, 2.0, 7.0 / 3},
                                 {2.0, 7.0 / 3, 8.0 / 3, 3.0}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(0, i, j), expected[i][j], 1e-12);
}

TEST(Resize, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (auto [ih, iw, oh, ow] : {std::array<std::size_t, 4>{3, 4, 6, 8}, {6, 6, 3, 4}, {1, 5, 4, 5}}) {
    auto x = random_tensor({2, ih, iw}, rng);
    const auto probe = random_tensor({2, oh, ow}, rng);
    const auto loss = [&] { return test::dot(bilinear_resize(x, oh, ow), probe); };
    EXPECT_LT(fd_relative_error(x, bilinear_resize_backward(probe, ih, iw), loss), 1e-4);
  }
}

TEST(Resize, RejectsEmptyTarget) {
  EXPECT_THROW(bilinear_resize(Tensor({1, 2, 2}), 0, 3), InvalidInput);
}

TEST(Resize, BlockMeanDownsample) {
  Tensor x({1, 2, 4}, std::vector<double>{1, 3, 5, 7, 3, 5, 7, 9});
  const auto y = block_mean_downsample(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 7.0);
  EXPECT_THROW(block_mean_downsample(Tensor({1, 3, 4}), 2), InvalidInput);
}

TEST(Loss, BceOfHalfIsLn2) {
  DifferenceMap m(3, 4, 1);
  const auto r = bce(m, Tensor({3, 4}, 0.5));
  EXPECT_NEAR(r.value, std::numbers::ln2, 1e-9);
}

TEST(Loss, BceAtClampedTargetsIsNearZero) {
  std::mt19937_64 rng(10);
  DifferenceMap m(4, 4);
  Tensor d({4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    m.values[i] = static_cast<std::uint8_t>(rng() & 1);
    d[i] = m.values[i] ? 1.0 - kLogEpsilon : kLogEpsilon;
  }
  EXPECT_NEAR(bce(m, d).value, 0.0, 1e-6);
}

TEST(Loss, BceGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  DifferenceMap m(5, 6);
  for (auto& v : m.values) v = static_cast<std::uint8_t>(rng() & 1);
  auto d = random_tensor({5, 6}, rng, 0.05, 0.95);
  const auto loss = [&] { return bce(m, d).value; };
  EXPECT_LT(fd_relative_error(d, bce(m, d).grad, loss), 1e-4);
}

TEST(Loss, CrossEntropyOfUniformIsLnC) {
  LabelMask m(3, 3, 2);
  m.labels[4] = 1;
  const auto r = cross_entropy_seg(Tensor({4, 3, 3}, 0.25), m);
  EXPECT_NEAR(r.value, std::log(4.0), 1e-9);
}

TEST(Loss, CrossEntropyOfPerfectPredictionIsZero) {
  std::mt19937_64 rng(12);
  const auto m = test::random_mask(4, 4, 3, rng);
  const auto r = cross_entropy_seg(one_hot<double>(m, 3), m);
  EXPECT_NEAR(r.value, 0.0, 1e-12);
}

TEST(Loss, CrossEntropyIgnoresLabel255) {
  std::mt19937_64 rng(13);
  auto h = softmax_forward(random_tensor({3, 2, 2}, rng));
  LabelMask m(2, 2, kIgnoreLabel);
  m.labels[0] = 1;
  const auto r = cross_entropy_seg(h, m);
  EXPECT_NEAR(r.value, -std::log(h(1, 0, 0)), 1e-12);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t u = 1; u < 4; ++u) EXPECT_EQ(r.grad[c * 4 + u], 0.0);
  const auto none = cross_entropy_seg(h, LabelMask(2, 2, kIgnoreLabel));
  EXPECT_EQ(none.value, 0.0);
  EXPECT_THROW(cross_entropy_seg(h, LabelMask(2, 2, 3)), InvalidInput);
}

TEST(Loss, CrossEntropyGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  auto h = softmax_forward(random_tensor({4, 5, 5}, rng));
  auto m = test::random_mask(5, 5, 4, rng);
  m.labels[3] = kIgnoreLabel;
  const auto loss = [&] { return cross_entropy_seg(h, m).value; };
  EXPECT_LT(fd_relative_error(h, cross_entropy_seg(h, m).grad, loss), 1e-4);
}

TEST(Schedule, Endpoints) {
  const Schedule s{1e-3, 1000};
  EXPECT_EQ(s.lr(0), 1e-3);
  EXPECT_EQ(s.lr(1000), 0.0);
  EXPECT_EQ(s.lr(500), 5e-4);
  EXPECT_GT(s.lr(250), s.lr(750));
}

TEST(Schedule, DefaultBaseRate) { EXPECT_EQ(Schedule{}.base_lr, 1e-3); }

TEST(Optim, SgdStepMovesAgainstGradient) {
  Tensor p({3}, std::vector<double>{1.0, 2.0, 3.0});
  std::vector<Tensor*> params{&p};
  const std::vector<Tensor> grads{Tensor({3}, std::vector<double>{1.0, -1.0, 0.0})};
  sgd_step<double>(params, grads, Schedule{0.1, 10}, 0);
  EXPECT_NEAR(p[0], 0.9, 1e-15);
  EXPECT_NEAR(p[1], 2.1, 1e-15);
  EXPECT_EQ(p[2], 3.0);
  EXPECT_THROW(sgd_step<double>(params, grads, Schedule{0.1, 10}, 11), InvalidInput);
}

TEST(Optim, UniformInitBoundsAndDeterminism) {
  Rng a(5), b(5);
  ConvLayer<double> l1(4, 8, 3), l2(4, 8, 3);
  init_uniform(l1, a);
  init_uniform(l2, b);
  EXPECT_EQ(l1.weights, l2.weights);
  const double bound = 1.0 / std::sqrt(36.0);
  for (double v : l1.weights.values()) EXPECT_LE(std::abs(v), bound);
  for (double v : l1.bias.values()) EXPECT_LE(std::abs(v), bound);
}
