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

#include <string>
#include <vector>

#include "rstisp/autograd.hpp"
#include "rstisp/layers.hpp"
#include "rstisp/style.hpp"

namespace rstisp::net {

/// Generator architecture. Defaults are the desk-scale widths: the full-size
/// widths (64, 128, 256, 512, 512), stem 64 and latent 512 times 0.25.
struct ModelConfig {
  int n_levels = 5;
  std::vector<std::int64_t> encoder_widths{16, 32, 64, 128, 128};
  std::int64_t stem_width = 16;
  /// Always n_levels - 1; the first block upsamples twice.
  int decoder_blocks = 4;
  /// Per PixelShuffle stage; mirrors the stride-2 encoder.
  int upscale_factor = 2;
  std::int64_t latent_dim = 128;
  std::uint64_t seed = 0;

  static ModelConfig with_width_multiplier(double multiplier, std::uint64_t seed = 0);
  void validate() const;
  /// [stem_width, encoder_widths...]
  std::vector<std::int64_t> level_widths() const;
  /// Spatial dims must be multiples of this.
  std::int64_t spatial_multiple() const { return std::int64_t{1} << n_levels; }
};

inline constexpr double kLeakySlope = 0.2;

/// One trainable layer of the generator, for counting and naming.
struct LayerSpec {
  std::string name;
  std::int64_t in = 0;
  std::int64_t out = 0;
  int kernel = 0;  // 0 for fully-connected
  int stride = 1;

  std::int64_t parameter_count() const {
    return kernel == 0 ? in * out + out : out * in * kernel * kernel + out;
  }
};

std::vector<LayerSpec> generator_layout(const ModelConfig& config);

/// Trainable parameter total of the generator for `config`.
std::int64_t param_count(const ModelConfig& config);

/// Per-level activations of the encoder.
struct EncoderState {
  std::vector<ag::Var> levels;  // post-AdaIN output of level i (index i-1)
  std::vector<ag::Var> skips;   // input of level i, before downsampling
  ag::Var bottleneck;
};

class Generator {
 public:
  explicit Generator(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  ag::Var stem(const ag::Var& x) const;
  std::vector<style::StyleCode> style_codes(const ag::Var& stem_features) const;
  const style::StyleExtractor& style_extractor() const { return style_; }

  /// Runs the AdaIN-normalized residual encoder over stem features.
  EncoderState encode_features(const ag::Var& stem_features, const std::vector<style::StyleCode>& codes) const;
  EncoderState encode(const ag::Var& x, const std::vector<style::StyleCode>& codes) const;
  /// PixelShuffle decoder with skip merges; output in (0, 1), 3 channels.
  ag::Var decode(const EncoderState& state) const;

  /// stem -> Gram -> trunk -> heads -> encoder -> decoder.
  ag::Var forward(const ag::Var& x) const;

  /// Gradient-free forward for arbitrary sizes: replicate-pads to the
  /// required multiple and crops back.
  Tensor infer(const Tensor& x) const;

 private:
  struct EncoderLevel {
    Conv2d conv1, conv2, shortcut;
  };
  struct UpStage {
    Conv2d up, merge;
    int skip_level = 0;
  };
  struct DecoderBlock {
    std::vector<UpStage> stages;
    Conv2d body1, body2;
  };

  ModelConfig config_;
  ParameterSet params_;
  Conv2d stem_;
  style::StyleExtractor style_;
  std::vector<EncoderLevel> encoder_;
  std::vector<DecoderBlock> decoder_;
  Conv2d head_;
};

/// Checks rank 4, 3 channels, finite values in [0, 1] and spatial divisibility.
void validate_model_input(const Tensor& x, std::int64_t multiple);

// Tensor-level structural transforms.
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

struct HaarSubbands {
  Tensor ll, lh, hl, hh;
};
HaarSubbands haar_dwt(const Tensor& x);
Tensor haar_idwt(const HaarSubbands& bands);

/// Edge-replicating pad on the bottom/right to (height, width).
Tensor pad_replicate(const Tensor& x, std::int64_t height, std::int64_t width);
Tensor crop(const Tensor& x, std::int64_t height, std::int64_t width);

}  // namespace rstisp::net
