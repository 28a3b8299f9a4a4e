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

#include "rstisp/style.hpp"

#include <cmath>
#include <string>

#include "rstisp/errors.hpp"
#include "rstisp/ops.hpp"

namespace rstisp::style {

using ag::Var;

namespace {
constexpr double kSlope = 0.2;
}

GramFeatures gram_matrix(const Var& features, bool normalize, int level) {
  expect_rank(features.value(), 4, "gram_matrix");
  const auto K = features.dim(1), H = features.dim(2), W = features.dim(3);
  if (H * W == 0) throw ContractError("gram_matrix: zero spatial extent");
  const double divisor = normalize ? static_cast<double>(K * H * W) : 1.0;
  return {ops::gram(features, divisor), level};
}

ChannelStats channel_stats(const Tensor& features) {
  expect_rank(features, 4, "channel_stats");
  const auto B = features.dim(0), C = features.dim(1), HW = features.dim(2) * features.dim(3);
  if (HW == 0) throw ContractError("channel_stats: zero spatial extent");
  ChannelStats s{Tensor({B, C}), Tensor({B, C})};
  for (std::int64_t i = 0; i < B * C; ++i) {
    const double* p = features.data() + i * HW;
    double m = 0.0;
    for (std::int64_t k = 0; k < HW; ++k) m += p[k];
    m /= static_cast<double>(HW);
    double v = 0.0;
    for (std::int64_t k = 0; k < HW; ++k) v += (p[k] - m) * (p[k] - m);
    v /= static_cast<double>(HW);
    s.mu[i] = m;
    s.sigma[i] = std::sqrt(v + kVarianceFloor);
  }
  return s;
}

StyleCode style_code_from_stats(const ChannelStats& stats, int level) {
  return {level, Var(stats.mu), Var(stats.sigma)};
}

Var adain(const Var& content, const StyleCode& style) {
  expect_rank(content.value(), 4, "adain");
  const Shape expected{content.dim(0), content.dim(1)};
  if (style.mu.shape() != expected || style.sigma.shape() != expected) {
    throw ContractError("adain: style code for level " + std::to_string(style.level) + " has widths " +
                        shape_to_string(style.mu.shape()) + "/" + shape_to_string(style.sigma.shape()) +
                        " but content needs " + shape_to_string(expected));
  }
  return ops::channel_affine(ops::instance_norm(content, kVarianceFloor), style.sigma, style.mu);
}

StyleExtractor::StyleExtractor(ParameterSet& params, Rng& rng, std::int64_t gram_channels, std::int64_t latent_dim,
                               std::vector<std::int64_t> level_widths)
    : gram_channels_(gram_channels), latent_dim_(latent_dim), level_widths_(std::move(level_widths)) {
  if (gram_channels < 1 || latent_dim < 1 || level_widths_.empty()) {
    throw ContractError("StyleExtractor: invalid dimensions");
  }
  std::int64_t in = gram_channels * gram_channels;
  for (int i = 1; i <= kTrunkLayers; ++i) {
    trunk_.push_back(Linear::create(params, rng, "style.fc" + std::to_string(i), in, latent_dim));
    in = latent_dim;
  }
  // Heads start near (mu, sigma) = (0, 1): small weights, softplus(bias) = 1.
  const double sigma_bias = std::log(std::exp(1.0) - 1.0);
  for (std::size_t i = 0; i < level_widths_.size(); ++i) {
    const auto c = level_widths_[i];
    Linear h = Linear::create(params, rng, "style.head" + std::to_string(i + 1), latent_dim, 2 * c);
    h.weight.mutable_value().scale_(0.1);
    for (std::int64_t j = c; j < 2 * c; ++j) h.bias.mutable_value()[j] = sigma_bias;
    heads_.push_back(h);
  }
}

StyleLatent StyleExtractor::extract(const GramFeatures& gram) const {
  const auto& m = gram.matrix;
  if (m.value().rank() != 3 || m.dim(1) != gram_channels_ || m.dim(2) != gram_channels_) {
    throw ContractError("style_extract: expected B x " + std::to_string(gram_channels_) + " x " +
                        std::to_string(gram_channels_) + " Gram matrix, got " + shape_to_string(m.shape()));
  }
  Var h = ops::reshape(m, {m.dim(0), gram_channels_ * gram_channels_});
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = trunk_[i](h);
    if (i + 1 < trunk_.size()) h = ops::leaky_relu(h, kSlope);
  }
  return {h};
}

StyleCode StyleExtractor::head(const StyleLatent& latent, int level) const {
  if (level < 1 || level > levels()) {
    throw ContractError("style_heads: level " + std::to_string(level) + " outside [1, " + std::to_string(levels()) +
                        "]");
  }
  const auto c = level_widths_[static_cast<std::size_t>(level - 1)];
  Var out = heads_[static_cast<std::size_t>(level - 1)](latent.vector);
  Var mu = ops::slice_cols(out, 0, c);
  Var sigma = ops::add_scalar(ops::softplus(ops::slice_cols(out, c, c)), kVarianceFloor);
  return {level, mu, sigma};
}

std::vector<StyleCode> StyleExtractor::heads(const StyleLatent& latent) const {
  std::vector<StyleCode> codes;
  for (int i = 1; i <= levels(); ++i) codes.push_back(head(latent, i));
  return codes;
}

}  // namespace rstisp::style
