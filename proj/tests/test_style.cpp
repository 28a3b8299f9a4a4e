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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "rstisp/errors.hpp"
#include "rstisp/ops.hpp"
#include "rstisp/style.hpp"
#include "test_support.hpp"

namespace rstisp {
namespace {

using ag::Var;

Tensor gram_loop(const Tensor& f, double divisor) {
  const auto B = f.dim(0), K = f.dim(1), N = f.dim(2) * f.dim(3);
  Tensor g({B, K, K});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t i = 0; i < K; ++i)
      for (std::int64_t j = 0; j < K; ++j) {
        double acc = 0;
        for (std::int64_t n = 0; n < N; ++n) acc += f[(b * K + i) * N + n] * f[(b * K + j) * N + n];
        g[(b * K + i) * K + j] = acc / divisor;
      }
  return g;
}

TEST(Gram, SingleChannelIsScaledSumOfSquares) {
  const Tensor f({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(style::gram_matrix(Var(f), false).matrix.value()[0], 30.0);
  EXPECT_DOUBLE_EQ(style::gram_matrix(Var(f), true).matrix.value()[0], 30.0 / 4.0);
}

TEST(Gram, OrthogonalRowsGiveIdentity) {
  const Tensor f({1, 2, 1, 2}, std::vector<double>{1, 0, 0, 1});
  const Tensor g = style::gram_matrix(Var(f), false).matrix.value();
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 1.0);
}

TEST(Gram, MatchesLoopOracle) {
  Rng rng(1);
  const Tensor f = rng.normal_tensor({2, 5, 3, 4});
  EXPECT_LT(max_abs_diff(style::gram_matrix(Var(f)).matrix.value(), gram_loop(f, 5 * 3 * 4)), 1e-12);
}

TEST(Gram, SymmetricPsdAndPermutationInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor f = rng.normal_tensor({1, 6, 4, 5});
    const Tensor g = style::gram_matrix(Var(f)).matrix.value();
    Eigen::MatrixXd m(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        ASSERT_EQ(g[i * 6 + j], g[j * 6 + i]);
        m(i, j) = g[i * 6 + j];
      }
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff(), -1e-5);
    const auto perm = rng.permutation(20);
    Tensor shuffled = f;
    for (int c = 0; c < 6; ++c)
      for (std::size_t n = 0; n < 20; ++n) shuffled[c * 20 + static_cast<std::int64_t>(n)] = f[c * 20 + static_cast<std::int64_t>(perm[n])];
    EXPECT_LT(max_abs_diff(style::gram_matrix(Var(shuffled)).matrix.value(), g), 1e-6);
  }
}

TEST(Gram, ZeroSpatialExtentRejected) {
  EXPECT_THROW(style::gram_matrix(Var(Tensor({1, 2, 0, 3}))), ContractError);
}

TEST(ChannelStats, ConstantChannel) {
  const auto s = style::channel_stats(Tensor({1, 1, 3, 3}, 0.25));
  EXPECT_DOUBLE_EQ(s.mu[0], 0.25);
  EXPECT_DOUBLE_EQ(s.sigma[0], std::sqrt(style::kVarianceFloor));
}

TEST(ChannelStats, TwoValues) {
  const auto s = style::channel_stats(Tensor({1, 1, 1, 2}, std::vector<double>{1, 3}));
  EXPECT_DOUBLE_EQ(s.mu[0], 2.0);
  EXPECT_NEAR(s.sigma[0], std::sqrt(1.0 + style::kVarianceFloor), 1e-15);
}

TEST(ChannelStats, MatchesLoopOracle) {
  Rng rng(3);
  const Tensor f = rng.normal_tensor({2, 3, 5, 5}, 0.3, 2.0);
  const auto s = style::channel_stats(f);
  for (std::int64_t i = 0; i < 6; ++i) {
    double m = 0, m2 = 0;
    for (std::int64_t k = 0; k < 25; ++k) m += f[i * 25 + k], m2 += f[i * 25 + k] * f[i * 25 + k];
    m /= 25;
    EXPECT_NEAR(s.mu[i], m, 1e-6);
    EXPECT_NEAR(s.sigma[i], std::sqrt(m2 / 25 - m * m + style::kVarianceFloor), 1e-6);
  }
}

style::StyleCode code(const Tensor& mu, const Tensor& sigma) { return {1, Var(mu), Var(sigma)}; }

TEST(Adain, OwnStatsAreFixedPoint) {
  Rng rng(4);
  const Tensor x = rng.normal_tensor({2, 3, 4, 4}, 1.0, 3.0);
  const auto out = style::adain(Var(x), style::style_code_from_stats(style::channel_stats(x)));
  EXPECT_LT(max_abs_diff(out.value(), x), 1e-5);
}

TEST(Adain, HandApplied) {
  const Tensor x({1, 1, 1, 2}, std::vector<double>{1, 3});
  const Tensor out = style::adain(Var(x), code(Tensor({1, 1}, 0.0), Tensor({1, 1}, 2.0))).value();
  EXPECT_NEAR(out[0], -2.0, 1e-4);
  EXPECT_NEAR(out[1], 2.0, 1e-4);
}

TEST(Adain, OutputStatsMatchStyleAndIdempotent) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = rng.normal_tensor({2, 4, 6, 6}, rng.uniform(-2, 2), rng.uniform(0.2, 4));
    const Tensor mu = rng.normal_tensor({2, 4});
    const Tensor sigma = rng.uniform_tensor({2, 4}, 0.2, 3.0);
    const auto c = code(mu, sigma);
    const Tensor y = style::adain(Var(x), c).value();
    const auto s = style::channel_stats(y);
    EXPECT_LT(max_abs_diff(s.mu, mu), 1e-4);
    EXPECT_LT(max_abs_diff(s.sigma, sigma), 1e-4);
    EXPECT_LT(max_abs_diff(style::adain(Var(y), c).value(), y), 1e-4);
  }
}

TEST(Adain, MismatchNamesLevelAndWidths) {
  style::StyleCode c{3, Var(Tensor({1, 4})), Var(Tensor({1, 4}, 1.0))};
  try {
    style::adain(Var(Tensor({1, 5, 2, 2})), c);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("level 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1,5)"), std::string::npos) << msg;
  }
}

TEST(Adain, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  const Tensor x = rng.normal_tensor({1, 2, 3, 3});
  const Tensor mu = rng.normal_tensor({1, 2});
  const Tensor sigma = rng.uniform_tensor({1, 2}, 0.5, 2.0);
  const Tensor mix = rng.normal_tensor({1, 2, 3, 3});
  const auto loss = [&](const Var& in, const Var& m, const Var& s) {
    return ops::sum(ops::mul(style::adain(in, {1, m, s}), Var(mix)));
  };
  EXPECT_LT(testing::check_input_gradient([&](const Var& v) { return loss(v, Var(mu), Var(sigma)); }, x), 1e-6);
  EXPECT_LT(testing::check_input_gradient([&](const Var& v) { return loss(Var(x), v, Var(sigma)); }, mu), 1e-6);
  EXPECT_LT(testing::check_input_gradient([&](const Var& v) { return loss(Var(x), Var(mu), v); }, sigma), 1e-6);
}

struct ExtractorFixture {
  ParameterSet params;
  Rng rng{7};
  style::StyleExtractor extractor{params, rng, 4, 8, {4, 6, 3}};
};

TEST(StyleExtractor, DeterministicAndShaped) {
  ExtractorFixture f;
  Rng rng(8);
  const auto g = style::gram_matrix(Var(rng.normal_tensor({2, 4, 5, 5})));
  const Tensor a = f.extractor.extract(g).vector.value();
  const Tensor b = f.extractor.extract(g).vector.value();
  EXPECT_EQ(a.shape(), (Shape{2, 8}));
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
  ExtractorFixture same;
  EXPECT_EQ(max_abs_diff(same.extractor.extract(g).vector.value(), a), 0.0);
}

TEST(StyleExtractor, RejectsWrongGramSize) {
  ExtractorFixture f;
  EXPECT_THROW(f.extractor.extract(style::gram_matrix(Var(Tensor({1, 3, 2, 2})))), ContractError);
}

TEST(StyleExtractor, LatentDependsOnGramEntries) {
  ExtractorFixture f;
  Rng rng(9);
  const Tensor gram = style::gram_matrix(Var(rng.normal_tensor({1, 4, 5, 5}))).matrix.value();
  const Tensor dir = rng.normal_tensor({1, 8});
  const auto objective = [&](const Tensor& g) {
    const auto latent = f.extractor.extract({Var(g), 1}).vector.value();
    double acc = 0;
    for (std::int64_t i = 0; i < 8; ++i) acc += latent[i] * dir[i];
    return acc;
  };
  const Var gv(gram, true);
  const Tensor analytic = ag::grad(ops::sum(ops::mul(f.extractor.extract({gv, 1}).vector, Var(dir))), {gv})[0];
  double norm = 0;
  for (double v : analytic.values()) norm += v * v;
  EXPECT_GT(norm, 0.0);
  EXPECT_LT(testing::fd_relative_error(objective, gram, analytic), 1e-6);
}

TEST(StyleHeads, ShapesPositivityAndRange) {
  ExtractorFixture f;
  Rng rng(10);
  const std::vector<std::int64_t> widths{4, 6, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const style::StyleLatent latent{Var(rng.normal_tensor({2, 8}, 0.0, 5.0))};
    const auto codes = f.extractor.heads(latent);
    ASSERT_EQ(codes.size(), 3u);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      EXPECT_EQ(codes[i].mu.shape(), (Shape{2, widths[i]}));
      EXPECT_EQ(codes[i].sigma.shape(), (Shape{2, widths[i]}));
      for (double s : codes[i].sigma.value().values()) EXPECT_GT(s, 0.0);
    }
  }
  const style::StyleLatent latent{Var(Tensor({1, 8}))};
  EXPECT_THROW(f.extractor.head(latent, 0), ContractError);
  EXPECT_THROW(f.extractor.head(latent, 4), ContractError);
}

TEST(StyleHeads, DistinctHeadsGiveDistinctCodes) {
  ParameterSet params;
  Rng rng(11);
  style::StyleExtractor ex(params, rng, 2, 6, {5, 5});
  const style::StyleLatent latent{Var(rng.normal_tensor({1, 6}))};
  EXPECT_GT(max_abs_diff(ex.head(latent, 1).mu.value(), ex.head(latent, 2).mu.value()), 0.0);
}

}  // namespace
}  // namespace rstisp
