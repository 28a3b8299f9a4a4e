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
#include <set>

#include "rstisp/critic.hpp"
#include "rstisp/errors.hpp"
#include "rstisp/network.hpp"
#include "rstisp/ops.hpp"
#include "test_support.hpp"

namespace rstisp {
namespace {

using ag::Var;
using net::ModelConfig;

// Closed-form parameter total written out term by term from the block
// structure: stem, 5-layer trunk, per-level heads, residual encoder levels,
// PixelShuffle decoder stages with skip merges and residual bodies, head.
std::int64_t analytic_params(const ModelConfig& c) {
  const auto L = c.n_levels;
  const auto s = c.stem_width, D = c.latent_dim;
  std::vector<std::int64_t> w{s};
  for (auto e : c.encoder_widths) w.push_back(e);
  std::int64_t n = 27 * s + s;
  n += s * s * D + D + 4 * (D * D + D);
  for (int i = 1; i <= L; ++i) n += 2 * w[i] * (D + 1);
  for (int i = 1; i <= L; ++i) n += 9 * w[i - 1] * w[i] + 9 * w[i] * w[i] + w[i - 1] * w[i] + 3 * w[i];
  for (int k = L; k >= 1; --k) n += 36 * w[k] * w[k - 1] + 4 * w[k - 1] + 18 * w[k - 1] * w[k - 1] + w[k - 1];
  for (int k = 0; k <= L - 2; ++k) n += 18 * w[k] * w[k] + 2 * w[k];
  n += 27 * s + 3;
  return n;
}

ModelConfig tiny_config(std::uint64_t seed = 3) {
  ModelConfig c;
  c.n_levels = 3;
  c.decoder_blocks = 2;
  c.encoder_widths = {4, 6, 8};
  c.stem_width = 4;
  c.latent_dim = 8;
  c.seed = seed;
  return c;
}

TEST(ModelConfig, DeskDefaultsAndMultiplier) {
  const ModelConfig d;
  const auto q = ModelConfig::with_width_multiplier(0.25);
  EXPECT_EQ(d.encoder_widths, q.encoder_widths);
  EXPECT_EQ(d.stem_width, q.stem_width);
  EXPECT_EQ(d.latent_dim, q.latent_dim);
  const auto full = ModelConfig::with_width_multiplier(1.0);
  EXPECT_EQ(full.encoder_widths, (std::vector<std::int64_t>{64, 128, 256, 512, 512}));
  EXPECT_EQ(full.latent_dim, 512);
  EXPECT_THROW(ModelConfig::with_width_multiplier(0.0), ContractError);
}

TEST(ModelConfig, ValidationRejectsInconsistentShapes) {
  ModelConfig c;
  c.decoder_blocks = 5;
  EXPECT_THROW(c.validate(), ContractError);
  c = ModelConfig{};
  c.encoder_widths.pop_back();
  EXPECT_THROW(c.validate(), ContractError);
  c = ModelConfig{};
  c.upscale_factor = 3;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(ParamCount, MatchesClosedFormAndInstantiatedModel) {
  EXPECT_EQ(net::param_count(ModelConfig{}), 2298403);
  EXPECT_EQ(net::param_count(ModelConfig{}), analytic_params(ModelConfig{}));
  Rng rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig c;
    c.n_levels = 2 + static_cast<int>(rng.below(3));
    c.decoder_blocks = c.n_levels - 1;
    c.encoder_widths.clear();
    for (int i = 0; i < c.n_levels; ++i) c.encoder_widths.push_back(1 + static_cast<std::int64_t>(rng.below(9)));
    c.stem_width = 1 + static_cast<std::int64_t>(rng.below(9));
    c.latent_dim = 1 + static_cast<std::int64_t>(rng.below(9));
    EXPECT_EQ(net::param_count(c), analytic_params(c));
    EXPECT_EQ(net::Generator(c).parameters().count(), analytic_params(c));
  }
}

TEST(Layout, NamesMatchParametersAndTrunkDepth) {
  const auto c = tiny_config();
  const auto layout = net::generator_layout(c);
  int fc = 0;
  for (const auto& l : layout) fc += l.name.rfind("style.fc", 0) == 0;
  EXPECT_EQ(fc, 5);
  net::Generator g(c);
  for (const auto& l : layout) {
    EXPECT_TRUE(g.parameters().find(l.name + ".weight").defined()) << l.name;
  }
}

TEST(Generator, OutputShapeRangeAndDeterminism) {
  net::Generator g(tiny_config());
  Rng rng(13);
  const Tensor x = testing::random_image(rng, {2, 3, 16, 16});
  const Tensor a = g.forward(Var(x)).value();
  EXPECT_EQ(a.shape(), x.shape());
  for (double v : a.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(max_abs_diff(a, g.forward(Var(x)).value()), 0.0);
  EXPECT_EQ(max_abs_diff(a, net::Generator(tiny_config()).forward(Var(x)).value()), 0.0);
  EXPECT_GT(max_abs_diff(a, net::Generator(tiny_config(4)).forward(Var(x)).value()), 0.0);
}

TEST(Generator, DeskBottleneckIsTwoByTwoAt64) {
  net::Generator g(ModelConfig{});
  Rng rng(14);
  const Var x(testing::random_image(rng, {1, 3, 64, 64}));
  ag::NoGradGuard no_grad;
  const auto s = g.stem(x);
  const auto state = g.encode_features(s, g.style_codes(s));
  EXPECT_EQ(state.bottleneck.shape(), (Shape{1, 128, 2, 2}));
  EXPECT_EQ(g.decode(state).shape(), (Shape{1, 3, 64, 64}));
}

TEST(Generator, EncoderLevelsCarryStyleStatistics) {
  net::Generator g(tiny_config());
  Rng rng(15);
  const Var x(testing::random_image(rng, {2, 3, 32, 32}));
  ag::NoGradGuard no_grad;
  const auto s = g.stem(x);
  std::vector<style::StyleCode> codes;
  for (int i = 0; i < 3; ++i) {
    const auto C = tiny_config().encoder_widths[static_cast<std::size_t>(i)];
    codes.push_back({i + 1, Var(rng.normal_tensor({2, C})), Var(rng.uniform_tensor({2, C}, 0.5, 2.0))});
  }
  const auto state = g.encode_features(s, codes);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto stats = style::channel_stats(state.levels[i].value());
    EXPECT_LT(max_abs_diff(stats.mu, codes[i].mu.value()), 1e-3) << "level " << i + 1;
    EXPECT_LT(max_abs_diff(stats.sigma, codes[i].sigma.value()), 1e-3) << "level " << i + 1;
  }
}

TEST(Generator, SkipConnectionsInfluenceOutput) {
  net::Generator g(tiny_config());
  Rng rng(16);
  const Var x(testing::random_image(rng, {1, 3, 16, 16}));
  ag::NoGradGuard no_grad;
  const auto s = g.stem(x);
  auto state = g.encode_features(s, g.style_codes(s));
  const Tensor full = g.decode(state).value();
  for (auto& skip : state.skips) skip = Var(Tensor(skip.shape()));
  EXPECT_GT(max_abs_diff(full, g.decode(state).value()), 1e-6);
}

TEST(Generator, StrictForwardButPaddedInfer) {
  net::Generator g(tiny_config());
  Rng rng(17);
  const Tensor odd = testing::random_image(rng, {1, 3, 12, 20});
  EXPECT_THROW(g.forward(Var(odd)), ContractError);
  const Tensor out = g.infer(odd);
  EXPECT_EQ(out.shape(), odd.shape());
  const Tensor exact = testing::random_image(rng, {1, 3, 16, 8});
  EXPECT_EQ(max_abs_diff(g.infer(exact), g.forward(Var(exact)).value()), 0.0);
}

TEST(Generator, DeskModelAcceptsFullTrackSize) {
  net::Generator g(ModelConfig{});
  Rng rng(18);
  const Tensor x = testing::random_image(rng, {1, 3, 504, 504});
  EXPECT_THROW(net::validate_model_input(x, 32), ContractError);
  const Tensor y = g.infer(x);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_TRUE(y.all_finite());
}

TEST(Generator, InputValidation) {
  EXPECT_THROW(net::validate_model_input(Tensor({1, 1, 32, 32}), 32), ContractError);
  EXPECT_THROW(net::validate_model_input(Tensor({1, 3, 32, 32}, 1.5), 32), ContractError);
  Tensor nan({1, 3, 32, 32});
  nan[5] = std::nan("");
  EXPECT_THROW(net::validate_model_input(nan, 32), ContractError);
  EXPECT_NO_THROW(net::validate_model_input(Tensor({1, 3, 32, 64}, 1.0), 32));
}

TEST(Generator, ParameterGradientsReachEveryLayer) {
  net::Generator g(tiny_config());
  Rng rng(19);
  const Var x(testing::random_image(rng, {1, 3, 16, 16}));
  ag::backward(ops::mean(g.forward(x)));
  for (const auto& [name, p] : g.parameters().entries()) {
    const Tensor& gr = p.grad();
    ASSERT_FALSE(gr.empty()) << name;
    double n = 0;
    for (double v : gr.values()) n += std::abs(v);
    EXPECT_GT(n, 0.0) << name;
  }
}

TEST(Critic, ScoreShapeAndDeterminism) {
  net::WaveletCritic c(net::CriticConfig{});
  EXPECT_EQ(c.parameters().count(), 39075);
  Rng rng(20);
  const Tensor x = testing::random_image(rng, {2, 3, 32, 32});
  const Tensor s = c.score(Var(x)).value();
  EXPECT_EQ(s.shape(), (Shape{2, c.score_count(32, 32)}));
  EXPECT_EQ(c.score_count(32, 32), 64 + 16 + 4);
  EXPECT_EQ(max_abs_diff(s, c.score(Var(x)).value()), 0.0);
  EXPECT_EQ(max_abs_diff(s, net::WaveletCritic(net::CriticConfig{}).score(Var(x)).value()), 0.0);
}

TEST(Critic, RejectsIndivisibleInput) {
  net::WaveletCritic c(net::CriticConfig{});
  EXPECT_THROW(c.score(Var(Tensor({1, 3, 12, 16}))), ContractError);
  EXPECT_THROW(c.score(Var(Tensor({1, 1, 16, 16}))), ContractError);
  EXPECT_THROW(c.score(Var(Tensor({1, 3, 4, 4}))), ContractError);
}

TEST(Critic, DirectionalDerivativeMatchesFiniteDifference) {
  net::WaveletCritic c(net::CriticConfig{2, 6, 5});
  Rng rng(21);
  const Tensor x = testing::random_image(rng, {2, 3, 8, 8});
  const Tensor d = rng.normal_tensor({2, 3, 8, 8});
  const Tensor jvp = c.directional_derivative(x, d).value();
  const double h = 1e-6;
  Tensor up = x, down = x;
  up.add_scaled_(d, h);
  down.add_scaled_(d, -h);
  const Tensor su = ops::mean_per_sample(c.score(Var(up))).value();
  const Tensor sd = ops::mean_per_sample(c.score(Var(down))).value();
  for (std::int64_t b = 0; b < 2; ++b) EXPECT_NEAR(jvp[b], (su[b] - sd[b]) / (2 * h), 1e-6);
}

}  // namespace
}  // namespace rstisp
