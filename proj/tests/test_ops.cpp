// Copyright 2026 The rstisp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>

#include "rstisp/errors.hpp"
#include "rstisp/network.hpp"
#include "rstisp/ops.hpp"
#include "test_support.hpp"

namespace rstisp {
namespace {

using ag::Var;
using testing::check_input_gradient;

TEST(Tensor, ShapeAndAccess) {
  Tensor t({2, 3, 4, 5}, 1.5);
  EXPECT_EQ(t.size(), 120);
  EXPECT_EQ(t.dim(3), 5);
  t.at(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t[119], 7.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ContractError);
  EXPECT_THROW((void)t.item(), ContractError);
}

TEST(Tensor, BatchItemAndStack) {
  Rng rng(3);
  const Tensor t = rng.uniform_tensor({3, 2, 4, 4}, 0, 1);
  std::vector<Tensor> items{t.batch_item(0), t.batch_item(1), t.batch_item(2)};
  EXPECT_EQ(max_abs_diff(stack_batch(items), t), 0.0);
}

TEST(Rng, DeterministicAndSerializable) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  const std::string state = a.serialize();
  const double next = a.uniform();
  Rng c(0);
  c.deserialize(state);
  EXPECT_EQ(c.uniform(), next);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}

TEST(Rng, UniformRangeAndPermutation) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  auto p = rng.permutation(50);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(Autograd, ChainRuleAndAccumulation) {
  Var x(Tensor({3}, std::vector<double>{1, 2, 3}), true);
  const Var y = ops::sum(ops::mul(x, x));
  ag::backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
  ag::backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[2], 12.0);
  x.zero_grad();
  const auto g = ag::grad(y, {x});
  EXPECT_DOUBLE_EQ(g[0][1], 4.0);
  EXPECT_EQ(x.grad().size(), 0);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Var x(Tensor({2}, 1.0), true);
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ops::mul_scalar(x, 2.0).requires_grad());
  }
  EXPECT_TRUE(ops::mul_scalar(x, 2.0).requires_grad());
}

TEST(Ops, ElementwiseGradients) {
  Rng rng(11);
  const Tensor x = rng.uniform_tensor({1, 2, 3, 3}, 0.1, 1.0);
  const Tensor y = rng.uniform_tensor({1, 2, 3, 3}, 0.1, 1.0);
  const Var yv(y);
  EXPECT_LT(check_input_gradient([&](const Var& v) { return ops::sum(ops::div(ops::mul(v, yv), ops::add(v, yv))); }, x),
            1e-6);
  EXPECT_LT(check_input_gradient([](const Var& v) { return ops::sum(ops::sigmoid(ops::softplus(v))); }, x), 1e-6);
  EXPECT_LT(check_input_gradient([](const Var& v) { return ops::mean(ops::pow_scalar(v, 0.3)); }, x), 1e-6);
  EXPECT_LT(check_input_gradient([](const Var& v) { return ops::sum(ops::leaky_relu(ops::add_scalar(v, -0.5), 0.2)); }, x),
            1e-6);
}

TEST(Ops, PowAtZeroHasFiniteGradient) {
  Var x(Tensor({1}, 0.0), true);
  const auto g = ag::grad(ops::sum(ops::pow_scalar(x, 0.5)), {x});
  EXPECT_EQ(g[0][0], 0.0);
}

// Direct 7-loop convolution.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0), K = w.dim(2);
  const auto Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor out({B, Co, Ho, Wo});
  for (std::int64_t n = 0; n < B; ++n)
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double acc = b.size() ? b[o] : 0.0;
          for (std::int64_t c = 0; c < Ci; ++c)
            for (std::int64_t u = 0; u < K; ++u)
              for (std::int64_t v = 0; v < K; ++v) {
                const auto ih = i * stride - pad + u, iw = j * stride - pad + v;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W) acc += w.at(o, c, u, v) * x.at(n, c, ih, iw);
              }
          out.at(n, o, i, j) = acc;
        }
  return out;
}

struct ConvCase {
  std::int64_t b, cin, h, w, cout;
  int k, stride;
};

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, MatchesLoopOracle) {
  const auto p = GetParam();
  Rng rng(17);
  const Tensor x = rng.normal_tensor({p.b, p.cin, p.h, p.w});
  const Tensor w = rng.normal_tensor({p.cout, p.cin, p.k, p.k});
  const Tensor b = rng.normal_tensor({p.cout});
  const Tensor out = ops::conv2d(Var(x), Var(w), Var(b), p.stride, p.k / 2).value();
  EXPECT_LT(max_abs_diff(out, conv_oracle(x, w, b, p.stride, p.k / 2)), 1e-10);
}

TEST_P(ConvTest, GradientsMatchFiniteDifferences) {
  const auto p = GetParam();
  Rng rng(19);
  const Tensor x = rng.normal_tensor({p.b, p.cin, p.h, p.w});
  const Tensor w = rng.normal_tensor({p.cout, p.cin, p.k, p.k});
  const Tensor mix = rng.normal_tensor(ops::conv2d(Var(x), Var(w), Var(), p.stride, p.k / 2).shape());
  const Var mv(mix);
  EXPECT_LT(check_input_gradient(
                [&](const Var& v) { return ops::sum(ops::mul(ops::conv2d(v, Var(w), Var(), p.stride, p.k / 2), mv)); }, x),
            1e-6);
  EXPECT_LT(check_input_gradient(
                [&](const Var& v) { return ops::sum(ops::mul(ops::conv2d(Var(x), v, Var(), p.stride, p.k / 2), mv)); }, w),
            1e-6);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvTest,
                         ::testing::Values(ConvCase{1, 1, 5, 5, 1, 3, 1}, ConvCase{2, 3, 6, 7, 4, 3, 1},
                                           ConvCase{3, 2, 8, 8, 3, 3, 2}, ConvCase{2, 4, 4, 4, 2, 1, 2},
                                           ConvCase{20, 2, 2, 2, 3, 3, 1}));

TEST(Ops, LinearMatchesMatrixProduct) {
  Rng rng(23);
  const Tensor x = rng.normal_tensor({2, 3});
  const Tensor w = rng.normal_tensor({4, 3});
  const Tensor b = rng.normal_tensor({4});
  const Tensor y = ops::linear(Var(x), Var(w), Var(b)).value();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = b[j];
      for (int k = 0; k < 3; ++k) acc += x[i * 3 + k] * w[j * 3 + k];
      EXPECT_NEAR(y[i * 4 + j], acc, 1e-12);
    }
  EXPECT_LT(check_input_gradient([&](const Var& v) { return ops::sum(ops::square(ops::linear(v, Var(w), Var(b)))); }, x),
            1e-6);
}

TEST(PixelShuffle, ShapeContract) {
  const Tensor x({1, 4, 2, 2});
  EXPECT_EQ(net::pixel_shuffle(x, 2).shape(), (Shape{1, 1, 4, 4}));
  EXPECT_THROW(net::pixel_shuffle(Tensor({1, 3, 2, 2}), 2), ContractError);
}

TEST(PixelShuffle, ChannelsFormSubpixelBlock) {
  const Tensor x({1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = net::pixel_shuffle(x, 2);
  EXPECT_EQ(y.at(0, 0, 0, 0), 1);
  EXPECT_EQ(y.at(0, 0, 0, 1), 2);
  EXPECT_EQ(y.at(0, 0, 1, 0), 3);
  EXPECT_EQ(y.at(0, 0, 1, 1), 4);
}

TEST(PixelShuffle, RoundTripIsExactAndPreservesValues) {
  Rng rng(29);
  const Tensor x = rng.normal_tensor({2, 8, 3, 5});
  const Tensor y = net::pixel_shuffle(x, 2);
  EXPECT_EQ(max_abs_diff(net::pixel_unshuffle(y, 2), x), 0.0);
  auto a = std::vector<double>(x.values().begin(), x.values().end());
  auto b = std::vector<double>(y.values().begin(), y.values().end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(PixelShuffle, GradientIsInversePermutation) {
  Rng rng(31);
  const Tensor x = rng.normal_tensor({1, 8, 2, 3});
  const Tensor mix = rng.normal_tensor({1, 2, 4, 6});
  EXPECT_LT(check_input_gradient([&](const Var& v) { return ops::sum(ops::mul(ops::pixel_shuffle(v, 2), Var(mix))); }, x),
            1e-8);
}

TEST(Haar, ConstantImageHasNoDetail) {
  const auto bands = net::haar_dwt(Tensor({1, 2, 4, 4}, 0.7));
  for (const Tensor* t : {&bands.lh, &bands.hl, &bands.hh}) {
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
  }
  EXPECT_NEAR(bands.ll[0], 1.4, 1e-15);
}

TEST(Haar, HandComputedBlock) {
  const double a = 1, b = 2, c = 5, d = 11;
  const auto bands = net::haar_dwt(Tensor({1, 1, 2, 2}, std::vector<double>{a, b, c, d}));
  EXPECT_DOUBLE_EQ(bands.ll[0], (a + b + c + d) / 2);
  EXPECT_DOUBLE_EQ(bands.lh[0], (a - b + c - d) / 2);
  EXPECT_DOUBLE_EQ(bands.hl[0], (a + b - c - d) / 2);
  EXPECT_DOUBLE_EQ(bands.hh[0], (a - b - c + d) / 2);
}

TEST(Haar, EnergyAndRoundTrip) {
  Rng rng(37);
  const Tensor x = rng.normal_tensor({2, 3, 8, 6});
  const auto bands = net::haar_dwt(x);
  double ex = 0, eb = 0;
  for (double v : x.values()) ex += v * v;
  for (const Tensor* t : {&bands.ll, &bands.lh, &bands.hl, &bands.hh}) {
    for (double v : t->values()) eb += v * v;
  }
  EXPECT_NEAR(ex, eb, 1e-6);
  EXPECT_LT(max_abs_diff(net::haar_idwt(bands), x), 1e-12);
}

TEST(Haar, OddDimsAreRejected) {
  try {
    net::haar_dwt(Tensor({1, 1, 3, 4}));
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("even"), std::string::npos) << e.what();
  }
}

TEST(Haar, AutogradVersionsMatchAndDifferentiate) {
  Rng rng(41);
  const Tensor x = rng.normal_tensor({1, 2, 4, 4});
  const Tensor sub = ops::haar_dwt(Var(x)).value();
  EXPECT_LT(max_abs_diff(ops::haar_idwt(Var(sub)).value(), x), 1e-12);
  const Tensor mix = rng.normal_tensor(sub.shape());
  EXPECT_LT(check_input_gradient([&](const Var& v) { return ops::sum(ops::mul(ops::haar_dwt(v), Var(mix))); }, x), 1e-8);
}

TEST(Ops, PoolFilterDiffGradients) {
  Rng rng(43);
  const Tensor x = rng.uniform_tensor({1, 2, 6, 7}, 0, 1);
  const std::vector<double> k{0.25, 0.5, 0.25};
  EXPECT_LT(check_input_gradient([](const Var& v) { return ops::sum(ops::square(ops::avg_pool2(v))); }, x), 1e-6);
  EXPECT_LT(check_input_gradient(
                [&](const Var& v) { return ops::sum(ops::square(ops::filter_h_valid(ops::filter_w_valid(v, k), k))); }, x),
            1e-6);
  EXPECT_LT(check_input_gradient([](const Var& v) { return ops::sum(ops::square(ops::diff_w(v))); }, x), 1e-6);
  EXPECT_LT(check_input_gradient([](const Var& v) { return ops::sum(ops::square(ops::diff_h(v))); }, x), 1e-6);
}

TEST(Ops, InstanceNormGradient) {
  Rng rng(47);
  const Tensor x = rng.normal_tensor({2, 3, 4, 4});
  const Tensor mix = rng.normal_tensor({2, 3, 4, 4});
  EXPECT_LT(check_input_gradient([&](const Var& v) { return ops::sum(ops::mul(ops::instance_norm(v, 1e-5), Var(mix))); }, x),
            1e-6);
}

TEST(Ops, ConcatAndSlice) {
  Rng rng(53);
  const Tensor a = rng.normal_tensor({2, 2, 3, 3});
  const Tensor b = rng.normal_tensor({2, 3, 3, 3});
  const std::vector<Var> parts{Var(a), Var(b)};
  const Var cat = ops::concat_channels(parts);
  EXPECT_EQ(cat.shape(), (Shape{2, 5, 3, 3}));
  EXPECT_EQ(max_abs_diff(ops::slice_channels(cat, 2, 3).value(), b), 0.0);
  EXPECT_LT(check_input_gradient(
                [&](const Var& v) {
                  const std::vector<Var> p{v, Var(b)};
                  return ops::sum(ops::square(ops::concat_channels(p)));
                },
                a),
            1e-6);
}

TEST(Network, ReplicatePadAndCrop) {
  Rng rng(59);
  const Tensor x = rng.normal_tensor({1, 3, 5, 6});
  const Tensor p = net::pad_replicate(x, 8, 9);
  EXPECT_EQ(p.at(0, 1, 7, 8), x.at(0, 1, 4, 5));
  EXPECT_EQ(p.at(0, 2, 2, 7), x.at(0, 2, 2, 5));
  EXPECT_EQ(max_abs_diff(net::crop(p, 5, 6), x), 0.0);
}

}  // namespace
}  // namespace rstisp
