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

#include <cmath>

#include "rstisp/errors.hpp"
#include "rstisp/isp_sim.hpp"
#include "test_support.hpp"

namespace rstisp {
namespace {

using isp::IspParams;

const std::array<double, 9> kEye{1, 0, 0, 0, 1, 0, 0, 0, 1};

TEST(Isp, IdentityParamsAreIdentityOnUnitRange) {
  Rng rng(1);
  const Tensor raw = testing::random_image(rng, {2, 3, 5, 7});
  EXPECT_LT(max_abs_diff(isp::forward_isp(raw, IspParams::identity()), raw), 1e-15);
}

TEST(Isp, GammaOnlyReferencePoint) {
  const auto p = IspParams::create({1, 1, 1}, kEye, 2.2, 1.0);
  const Tensor out = isp::forward_isp(Tensor({1, 3, 1, 1}, 0.25), p);
  for (std::int64_t c = 0; c < 3; ++c) EXPECT_NEAR(out[c], 0.5326, 1e-3);
  EXPECT_NEAR(out[0], std::pow(0.25, 1 / 2.2), 1e-12);
}

TEST(Isp, StagesComposeInDocumentedOrder) {
  const std::array<double, 9> m{0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.0, 0.3, 0.7};
  const auto p = IspParams::create({1.5, 1.0, 0.5}, m, 2.0, 0.3);
  const double in[3] = {0.2, 0.4, 0.6};
  Tensor raw({1, 3, 1, 1});
  for (int c = 0; c < 3; ++c) raw[c] = in[c];
  const Tensor out = isp::forward_isp(raw, p);
  const double v[3] = {0.3, 0.4, 0.3};
  for (int c = 0; c < 3; ++c) {
    const double w = m[3 * c] * v[0] + m[3 * c + 1] * v[1] + m[3 * c + 2] * v[2];
    const double t = w <= 0.3 ? w : 0.3 + 0.7 * (1 - std::exp(-(w - 0.3) / 0.7));
    EXPECT_NEAR(out[c], std::sqrt(t), 1e-14);
  }
}

TEST(ToneCurve, MonotoneContinuousAndInvertible) {
  for (double knee : {0.02, 0.3, 0.9, 1.0}) {
    double prev = -1;
    for (int i = 0; i <= 2000; ++i) {
      const double x = i / 1000.0;
      const double y = isp::tone_curve(x, knee);
      EXPECT_GT(y, prev);
      EXPECT_LE(y, std::max(1.0, x));
      prev = y;
      if (y < 1.0 - 1e-6) EXPECT_NEAR(isp::inverse_tone_curve(y, knee), x, 1e-8);
    }
    EXPECT_NEAR(isp::tone_curve(knee + 1e-9, knee), knee, 1e-8);
  }
}

TEST(Isp, RoundTripOnUnsaturatedPixels) {
  Rng rng(2);
  for (int draw = 0; draw < 200; ++draw) {
    const auto p = IspParams::sample(rng.next_u64());
    const Tensor raw = testing::random_image(rng, {1, 3, 4, 4}, 0.0, 0.6);
    const auto inv = isp::inverse_isp(isp::forward_isp(raw, p), p);
    for (std::int64_t i = 0; i < 16; ++i) {
      if (inv.saturated[i] != 0.0) continue;
      for (std::int64_t c = 0; c < 3; ++c) ASSERT_NEAR(inv.raw[c * 16 + i], raw[c * 16 + i], 1e-5) << draw;
    }
  }
}

TEST(Isp, SaturationMaskMarksClippedPixels) {
  const auto p = IspParams::create({2.5, 2.5, 2.5}, kEye, 2.2, 1.0);
  Tensor raw({1, 3, 1, 2}, 0.1);
  raw[0] = 0.9;  // pixel 0, red channel, clips
  const auto inv = isp::inverse_isp(isp::forward_isp(raw, p), p);
  EXPECT_EQ(inv.saturated[0], 1.0);
  EXPECT_EQ(inv.saturated[1], 0.0);
}

TEST(IspParams, SamplesAreDeterministicDistinctAndInRange) {
  const auto a = IspParams::sample(5), b = IspParams::sample(5), c = IspParams::sample(6);
  EXPECT_EQ(a.wb_gains, b.wb_gains);
  EXPECT_EQ(a.color_matrix, b.color_matrix);
  EXPECT_NE(a.color_matrix, c.color_matrix);
  double gmin = 1e9, gmax = -1e9;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto p = IspParams::sample(s);
    for (double g : p.wb_gains) {
      EXPECT_GE(g, IspParams::kGainMin);
      EXPECT_LE(g, IspParams::kGainMax);
    }
    EXPECT_GE(p.gamma, IspParams::kGammaMin);
    EXPECT_LE(p.gamma, IspParams::kGammaMax);
    EXPECT_GE(p.tone_knee, IspParams::kKneeMin);
    EXPECT_LE(p.tone_knee, IspParams::kKneeMax);
    EXPECT_LT(p.condition_number(), IspParams::kMaxCondition);
    for (int r = 0; r < 3; ++r) {
      double sum = 0;
      for (int k = 0; k < 3; ++k) {
        EXPECT_GE(p.color_matrix[r * 3 + k], 0.0);
        sum += p.color_matrix[r * 3 + k];
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    gmin = std::min(gmin, p.gamma);
    gmax = std::max(gmax, p.gamma);
  }
  EXPECT_LT(gmin, 1.6);
  EXPECT_GT(gmax, 2.7);
}

TEST(IspParams, RejectsSingularAndInvalid) {
  EXPECT_THROW(IspParams::create({1, 1, 1}, {1, 2, 3, 2, 4, 6, 0, 0, 1}, 2.2, 0.5), ContractError);
  EXPECT_THROW(IspParams::create({0, 1, 1}, kEye, 2.2, 0.5), ContractError);
  EXPECT_THROW(IspParams::create({1, 1, 1}, kEye, -1.0, 0.5), ContractError);
  EXPECT_THROW(IspParams::create({1, 1, 1}, kEye, 2.2, 0.0), ContractError);
  EXPECT_THROW(isp::forward_isp(Tensor({1, 4, 2, 2}), IspParams::identity()), ContractError);
}

TEST(SyntheticPair, DeterministicExactAndValid) {
  const auto a = isp::make_synthetic_pair(9, 32), b = isp::make_synthetic_pair(9, 32);
  EXPECT_EQ(max_abs_diff(a.raw, b.raw), 0.0);
  EXPECT_EQ(max_abs_diff(a.srgb, b.srgb), 0.0);
  EXPECT_EQ(max_abs_diff(a.srgb, isp::forward_isp(a.raw, a.params)), 0.0);
  EXPECT_GT(max_abs_diff(a.raw, isp::make_synthetic_pair(10, 32).raw), 0.0);
  for (double v : a.raw.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(isp::make_synthetic_pair(1, 40), ContractError);
}

}  // namespace
}  // namespace rstisp
