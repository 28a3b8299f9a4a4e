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

#include "rstisp/network.hpp"

#include <cmath>

#include "rstisp/errors.hpp"
#include "rstisp/ops.hpp"

namespace rstisp::net {

using ag::Var;

ModelConfig ModelConfig::with_width_multiplier(double multiplier, std::uint64_t seed) {
  if (!(multiplier > 0.0)) throw ContractError("width multiplier must be positive");
  auto scale = [multiplier](double base) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::lround(base * multiplier)));
  };
  ModelConfig c;
  c.encoder_widths = {scale(64), scale(128), scale(256), scale(512), scale(512)};
  c.stem_width = scale(64);
  c.latent_dim = scale(512);
  c.seed = seed;
  return c;
}

void ModelConfig::validate() const {
  if (n_levels < 2) throw ContractError("model config: n_levels must be >= 2");
  if (static_cast<int>(encoder_widths.size()) != n_levels) {
    throw ContractError("model config: " + std::to_string(encoder_widths.size()) + " encoder widths for " +
                        std::to_string(n_levels) + " levels");
  }
  if (decoder_blocks != n_levels - 1) {
    throw ContractError("model config: decoder_blocks must equal n_levels - 1 (" + std::to_string(n_levels - 1) +
                        ") to restore the input resolution");
  }
  if (upscale_factor != 2) throw ContractError("model config: upscale_factor must be 2 to mirror stride-2 levels");
  if (stem_width < 1 || latent_dim < 1) throw ContractError("model config: widths must be positive");
  for (auto w : encoder_widths) {
    if (w < 1) throw ContractError("model config: widths must be positive");
  }
}

std::vector<std::int64_t> ModelConfig::level_widths() const {
  std::vector<std::int64_t> w{stem_width};
  w.insert(w.end(), encoder_widths.begin(), encoder_widths.end());
  return w;
}

namespace {

struct StagePlan {
  std::int64_t in, out, skip_channels;
  int skip_level;
};

// Decoder block j (0-based) upsampling stages; block 0 runs two.
std::vector<std::vector<StagePlan>> decoder_plan(const ModelConfig& c) {
  const auto w = c.level_widths();
  const int L = c.n_levels;
  std::vector<std::vector<StagePlan>> plan;
  auto stage = [&w](int from_level, int skip_level) {
    return StagePlan{w[static_cast<std::size_t>(from_level)], w[static_cast<std::size_t>(skip_level - 1)],
                     w[static_cast<std::size_t>(skip_level - 1)], skip_level};
  };
  plan.push_back({stage(L, L), stage(L - 1, L - 1)});
  for (int j = 2; j <= L - 1; ++j) plan.push_back({stage(L - j, L - j)});
  return plan;
}

}  // namespace

std::vector<LayerSpec> generator_layout(const ModelConfig& c) {
  c.validate();
  const auto w = c.level_widths();
  std::vector<LayerSpec> layout;
  layout.push_back({"stem.conv", 3, c.stem_width, 3, 1});
  std::int64_t in = c.stem_width * c.stem_width;
  for (int i = 1; i <= style::StyleExtractor::kTrunkLayers; ++i) {
    layout.push_back({"style.fc" + std::to_string(i), in, c.latent_dim, 0, 1});
    in = c.latent_dim;
  }
  for (int i = 1; i <= c.n_levels; ++i) {
    layout.push_back({"style.head" + std::to_string(i), c.latent_dim, 2 * w[static_cast<std::size_t>(i)], 0, 1});
  }
  for (int i = 1; i <= c.n_levels; ++i) {
    const auto cin = w[static_cast<std::size_t>(i - 1)], cout = w[static_cast<std::size_t>(i)];
    const std::string p = "enc" + std::to_string(i);
    layout.push_back({p + ".conv1", cin, cout, 3, 2});
    layout.push_back({p + ".conv2", cout, cout, 3, 1});
    layout.push_back({p + ".shortcut", cin, cout, 1, 2});
  }
  const auto plan = decoder_plan(c);
  for (std::size_t j = 0; j < plan.size(); ++j) {
    const std::string p = "dec" + std::to_string(j + 1);
    for (std::size_t s = 0; s < plan[j].size(); ++s) {
      const auto& st = plan[j][s];
      const auto r2 = static_cast<std::int64_t>(c.upscale_factor) * c.upscale_factor;
      layout.push_back({p + ".up" + std::to_string(s + 1), st.in, st.out * r2, 3, 1});
      layout.push_back({p + ".merge" + std::to_string(s + 1), st.out + st.skip_channels, st.out, 3, 1});
    }
    const auto width = plan[j].back().out;
    layout.push_back({p + ".body1", width, width, 3, 1});
    layout.push_back({p + ".body2", width, width, 3, 1});
  }
  layout.push_back({"head.conv", c.stem_width, 3, 3, 1});
  return layout;
}

std::int64_t param_count(const ModelConfig& config) {
  std::int64_t n = 0;
  for (const auto& l : generator_layout(config)) n += l.parameter_count();
  return n;
}

Generator::Generator(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const auto w = config_.level_widths();
  stem_ = Conv2d::create(params_, rng, "stem.conv", 3, config_.stem_width, 3);
  style_ = style::StyleExtractor(params_, rng, config_.stem_width, config_.latent_dim,
                                 {config_.encoder_widths.begin(), config_.encoder_widths.end()});
  for (int i = 1; i <= config_.n_levels; ++i) {
    const auto cin = w[static_cast<std::size_t>(i - 1)], cout = w[static_cast<std::size_t>(i)];
    const std::string p = "enc" + std::to_string(i);
    EncoderLevel level;
    level.conv1 = Conv2d::create(params_, rng, p + ".conv1", cin, cout, 3, 2);
    level.conv2 = Conv2d::create(params_, rng, p + ".conv2", cout, cout, 3, 1);
    level.shortcut = Conv2d::create(params_, rng, p + ".shortcut", cin, cout, 1, 2);
    encoder_.push_back(level);
  }
  const auto plan = decoder_plan(config_);
  const int r2 = config_.upscale_factor * config_.upscale_factor;
  for (std::size_t j = 0; j < plan.size(); ++j) {
    const std::string p = "dec" + std::to_string(j + 1);
    DecoderBlock block;
    for (std::size_t s = 0; s < plan[j].size(); ++s) {
      const auto& st = plan[j][s];
      UpStage stage;
      stage.up = Conv2d::create(params_, rng, p + ".up" + std::to_string(s + 1), st.in, st.out * r2, 3);
      stage.merge =
          Conv2d::create(params_, rng, p + ".merge" + std::to_string(s + 1), st.out + st.skip_channels, st.out, 3);
      stage.skip_level = st.skip_level;
      block.stages.push_back(stage);
    }
    const auto width = plan[j].back().out;
    block.body1 = Conv2d::create(params_, rng, p + ".body1", width, width, 3);
    block.body2 = Conv2d::create(params_, rng, p + ".body2", width, width, 3);
    decoder_.push_back(block);
  }
  head_ = Conv2d::create(params_, rng, "head.conv", config_.stem_width, 3, 3);
}

Var Generator::stem(const Var& x) const { return ops::leaky_relu(stem_(x), kLeakySlope); }

std::vector<style::StyleCode> Generator::style_codes(const Var& stem_features) const {
  return style_.heads(style_.extract(style::gram_matrix(stem_features, true, 1)));
}

EncoderState Generator::encode_features(const Var& stem_features, const std::vector<style::StyleCode>& codes) const {
  if (static_cast<int>(codes.size()) != config_.n_levels) {
    throw ContractError("encoder_forward: got " + std::to_string(codes.size()) + " style codes for " +
                        std::to_string(config_.n_levels) + " levels");
  }
  const auto multiple = config_.spatial_multiple();
  if (stem_features.dim(2) % multiple != 0 || stem_features.dim(3) % multiple != 0) {
    throw ContractError("encoder_forward: spatial dims " + shape_to_string(stem_features.shape()) +
                        " must be divisible by " + std::to_string(multiple));
  }
  EncoderState state;
  Var a = stem_features;
  for (int i = 0; i < config_.n_levels; ++i) {
    const auto& level = encoder_[static_cast<std::size_t>(i)];
    state.skips.push_back(a);
    Var h = ops::leaky_relu(level.conv1(a), kLeakySlope);
    h = level.conv2(h);
    Var r = ops::leaky_relu(ops::add(h, level.shortcut(a)), kLeakySlope);
    a = style::adain(r, codes[static_cast<std::size_t>(i)]);
    state.levels.push_back(a);
  }
  state.bottleneck = a;
  return state;
}

EncoderState Generator::encode(const Var& x, const std::vector<style::StyleCode>& codes) const {
  return encode_features(stem(x), codes);
}

Var Generator::decode(const EncoderState& state) const {
  const auto w = config_.level_widths();
  if (static_cast<int>(state.skips.size()) != config_.n_levels || !state.bottleneck.defined() ||
      state.bottleneck.value().rank() != 4 ||
      state.bottleneck.dim(1) != w[static_cast<std::size_t>(config_.n_levels)]) {
    throw ContractError("decoder_forward: encoder state does not match the model config");
  }
  Var h = state.bottleneck;
  for (const auto& block : decoder_) {
    for (const auto& stage : block.stages) {
      Var u = ops::leaky_relu(ops::pixel_shuffle(stage.up(h), config_.upscale_factor), kLeakySlope);
      const Var parts[] = {u, state.skips[static_cast<std::size_t>(stage.skip_level - 1)]};
      h = ops::leaky_relu(stage.merge(ops::concat_channels(parts)), kLeakySlope);
    }
    Var t = ops::leaky_relu(block.body1(h), kLeakySlope);
    t = block.body2(t);
    h = ops::leaky_relu(ops::add(h, t), kLeakySlope);
  }
  return ops::sigmoid(head_(h));
}

Var Generator::forward(const Var& x) const {
  validate_model_input(x.value(), config_.spatial_multiple());
  Var s = stem(x);
  return decode(encode_features(s, style_codes(s)));
}

Tensor Generator::infer(const Tensor& x) const {
  expect_rank(x, 4, "infer");
  const auto m = config_.spatial_multiple();
  const auto H = x.dim(2), W = x.dim(3);
  const auto Hp = (H + m - 1) / m * m, Wp = (W + m - 1) / m * m;
  ag::NoGradGuard no_grad;
  Tensor out = forward(Var(pad_replicate(x, Hp, Wp))).value();
  return crop(out, H, W);
}

void validate_model_input(const Tensor& x, std::int64_t multiple) {
  expect_rank(x, 4, "model input");
  if (x.dim(1) != 3) throw ContractError("model input: expected 3 channels, got " + shape_to_string(x.shape()));
  if (x.dim(2) % multiple != 0 || x.dim(3) % multiple != 0 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw ContractError("model input: spatial dims " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                        " must be positive multiples of " + std::to_string(multiple));
  }
  for (double v : x.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("model input: values must be finite and within [0, 1]");
  }
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  ag::NoGradGuard no_grad;
  return ops::pixel_shuffle(Var(x), r).value();
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  ag::NoGradGuard no_grad;
  return ops::pixel_unshuffle(Var(x), r).value();
}

HaarSubbands haar_dwt(const Tensor& x) {
  ag::NoGradGuard no_grad;
  Var s = ops::haar_dwt(Var(x));
  const auto C = x.dim(1);
  return {ops::slice_channels(s, 0, C).value(), ops::slice_channels(s, C, C).value(),
          ops::slice_channels(s, 2 * C, C).value(), ops::slice_channels(s, 3 * C, C).value()};
}

Tensor haar_idwt(const HaarSubbands& bands) {
  ag::NoGradGuard no_grad;
  const Var parts[] = {Var(bands.ll), Var(bands.lh), Var(bands.hl), Var(bands.hh)};
  return ops::haar_idwt(ops::concat_channels(parts)).value();
}

Tensor pad_replicate(const Tensor& x, std::int64_t height, std::int64_t width) {
  expect_rank(x, 4, "pad_replicate");
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (height < H || width < W || H == 0 || W == 0) throw ContractError("pad_replicate: target smaller than input");
  Tensor out({B, C, height, width});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 0; h < height; ++h)
        for (std::int64_t w = 0; w < width; ++w)
          out.at(b, c, h, w) = x.at(b, c, std::min(h, H - 1), std::min(w, W - 1));
  return out;
}

Tensor crop(const Tensor& x, std::int64_t height, std::int64_t width) {
  expect_rank(x, 4, "crop");
  if (height > x.dim(2) || width > x.dim(3)) throw ContractError("crop: target larger than input");
  Tensor out({x.dim(0), x.dim(1), height, width});
  for (std::int64_t b = 0; b < x.dim(0); ++b)
    for (std::int64_t c = 0; c < x.dim(1); ++c)
      for (std::int64_t h = 0; h < height; ++h)
        for (std::int64_t w = 0; w < width; ++w) out.at(b, c, h, w) = x.at(b, c, h, w);
  return out;
}

}  // namespace rstisp::net
