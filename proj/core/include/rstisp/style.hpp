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

#pragma once

#include <vector>

#include "rstisp/autograd.hpp"
#include "rstisp/layers.hpp"

namespace rstisp::style {

/// Variance floor inside the standard deviation, sqrt(var + eps).
inline constexpr double kVarianceFloor = 1e-5;

/// Channel-correlation (Gram) matrices, B x K x K.
struct GramFeatures {
  ag::Var matrix;
  int level = 1;
};

/// Gram matrix of B x K x H x W features; divided by K H W when `normalize`.
GramFeatures gram_matrix(const ag::Var& features, bool normalize = true, int level = 1);

struct ChannelStats {
  Tensor mu;     // B x C
  Tensor sigma;  // B x C, sqrt(population variance + kVarianceFloor)
};

ChannelStats channel_stats(const Tensor& features);

/// Target statistics for one encoder level, B x C_i each.
struct StyleCode {
  int level = 1;
  ag::Var mu;
  ag::Var sigma;
};

StyleCode style_code_from_stats(const ChannelStats& stats, int level = 1);

/// sigma_y (x - mu_x) / sigma_x + mu_y, per sample and channel.
ag::Var adain(const ag::Var& content, const StyleCode& style);

/// Output of the fully-connected trunk, B x D.
struct StyleLatent {
  ag::Var vector;
};

/// Fully-connected trunk over a flattened Gram matrix plus one head per
/// encoder level producing that level's (mu, sigma).
class StyleExtractor {
 public:
  static constexpr int kTrunkLayers = 5;

  StyleExtractor() = default;
  StyleExtractor(ParameterSet& params, Rng& rng, std::int64_t gram_channels, std::int64_t latent_dim,
                 std::vector<std::int64_t> level_widths);

  StyleLatent extract(const GramFeatures& gram) const;
  /// `level` is 1-based.
  StyleCode head(const StyleLatent& latent, int level) const;
  std::vector<StyleCode> heads(const StyleLatent& latent) const;

  int levels() const { return static_cast<int>(level_widths_.size()); }
  std::int64_t latent_dim() const { return latent_dim_; }

 private:
  std::int64_t gram_channels_ = 0;
  std::int64_t latent_dim_ = 0;
  std::vector<std::int64_t> level_widths_;
  std::vector<Linear> trunk_;
  std::vector<Linear> heads_;
};

}  // namespace rstisp::style
