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

#include "rstisp/critic.hpp"

#include <string>

#include "rstisp/errors.hpp"
#include "rstisp/network.hpp"
#include "rstisp/ops.hpp"

namespace rstisp::net {

using ag::Var;

void CriticConfig::validate() const {
  if (scales < 1) throw ContractError("critic config: scales must be >= 1");
  if (width < 1) throw ContractError("critic config: width must be positive");
}

WaveletCritic::WaveletCritic(CriticConfig config, std::int64_t image_channels)
    : config_(config), channels_(image_channels) {
  config_.validate();
  Rng rng(config_.seed);
  for (int s = 1; s <= config_.scales; ++s) {
    const std::string p = "critic.s" + std::to_string(s);
    Branch b;
    b.conv1 = Conv2d::create(params_, rng, p + ".conv1", 4 * channels_, config_.width, 3, 1);
    b.conv2 = Conv2d::create(params_, rng, p + ".conv2", config_.width, config_.width, 3, 2);
    b.conv3 = Conv2d::create(params_, rng, p + ".conv3", config_.width, 1, 3, 1);
    branches_.push_back(b);
  }
}

void WaveletCritic::validate_input(const Shape& shape) const {
  const std::int64_t m = std::int64_t{1} << config_.scales;
  if (shape.size() != 4 || shape[1] != channels_) {
    throw ContractError("critic: expected B x " + std::to_string(channels_) + " x H x W input, got " +
                        shape_to_string(shape));
  }
  if (shape[2] < m || shape[3] < m || shape[2] % m != 0 || shape[3] % m != 0) {
    throw ContractError("critic: spatial dims " + std::to_string(shape[2]) + "x" + std::to_string(shape[3]) +
                        " must be positive multiples of " + std::to_string(m) + " for " +
                        std::to_string(config_.scales) + " Haar scales");
  }
}

std::int64_t WaveletCritic::score_count(std::int64_t height, std::int64_t width) const {
  validate_input({1, channels_, height, width});
  std::int64_t total = 0;
  for (int s = 1; s <= config_.scales; ++s) {
    height /= 2;
    width /= 2;
    total += ((height - 1) / 2 + 1) * ((width - 1) / 2 + 1);
  }
  return total;
}

namespace {

Var flatten_scores(const Var& map) { return ops::reshape(map, {map.dim(0), map.dim(2) * map.dim(3), 1, 1}); }

Var join(const std::vector<Var>& parts) {
  Var cat = ops::concat_channels(parts);
  return ops::reshape(cat, {cat.dim(0), cat.dim(1)});
}

}  // namespace

Var WaveletCritic::score(const Var& x) const {
  validate_input(x.shape());
  std::vector<Var> parts;
  Var level = x;
  for (const auto& b : branches_) {
    Var bands = ops::haar_dwt(level);
    Var h = ops::leaky_relu(b.conv1(bands), kLeakySlope);
    h = ops::leaky_relu(b.conv2(h), kLeakySlope);
    parts.push_back(flatten_scores(b.conv3(h)));
    level = ops::slice_channels(bands, 0, channels_);
  }
  return join(parts);
}

Var WaveletCritic::directional_derivative(const Tensor& x, const Tensor& direction) const {
  validate_input(x.shape());
  expect_same_shape(x, direction, "critic directional derivative");
  auto slope_mask = [](const Tensor& pre) {
    Tensor m(pre.shape());
    for (std::int64_t i = 0; i < pre.size(); ++i) m[i] = pre[i] > 0.0 ? 1.0 : kLeakySlope;
    return m;
  };
  // Primal pass for the rectifier masks; the masks are piecewise constant in the parameters.
  std::vector<std::pair<Tensor, Tensor>> masks;
  {
    ag::NoGradGuard no_grad;
    Var level(x);
    for (const auto& b : branches_) {
      Var bands = ops::haar_dwt(level);
      Var pre1 = b.conv1(bands);
      Var pre2 = b.conv2(ops::leaky_relu(pre1, kLeakySlope));
      masks.emplace_back(slope_mask(pre1.value()), slope_mask(pre2.value()));
      level = ops::slice_channels(bands, 0, channels_);
    }
  }
  // Tangent pass: the Jacobian-vector product, recorded against the weights.
  std::vector<Var> parts;
  Var tangent(direction);
  for (std::size_t s = 0; s < branches_.size(); ++s) {
    const auto& b = branches_[s];
    Var bands = ops::haar_dwt(tangent);
    Var t = ops::mul(b.conv1.linear_part(bands), Var(masks[s].first));
    t = ops::mul(b.conv2.linear_part(t), Var(masks[s].second));
    parts.push_back(flatten_scores(b.conv3.linear_part(t)));
    tangent = ops::slice_channels(bands, 0, channels_);
  }
  return ops::mean_per_sample(join(parts));
}

}  // namespace rstisp::net
