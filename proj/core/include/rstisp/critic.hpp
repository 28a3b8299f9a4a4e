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

#include "rstisp/layers.hpp"
#include "rstisp/losses.hpp"

namespace rstisp::net {

struct CriticConfig {
  /// Recursive Haar decompositions; each scale scores its four subbands.
  int scales = 3;
  std::int64_t width = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Wasserstein critic over Haar subbands. At every scale the concatenated
/// LL/LH/HL/HH bands are scored patch-wise and the LL band is fed to the next
/// scale. Scores are unbounded.
class WaveletCritic final : public losses::DifferentiableCritic {
 public:
  explicit WaveletCritic(CriticConfig config, std::int64_t image_channels = 3);

  const CriticConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// B x P patch scores, scales concatenated coarse-last.
  ag::Var score(const ag::Var& x) const override;
  ag::Var directional_derivative(const Tensor& x, const Tensor& direction) const override;

  /// P for an H x W input.
  std::int64_t score_count(std::int64_t height, std::int64_t width) const;
  void validate_input(const Shape& shape) const;

 private:
  struct Branch {
    Conv2d conv1, conv2, conv3;
  };

  CriticConfig config_;
  std::int64_t channels_;
  ParameterSet params_;
  std::vector<Branch> branches_;
};

}  // namespace rstisp::net
