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

#include <array>
#include <cstdint>

#include "rstisp/tensor.hpp"

namespace rstisp::isp {

/// Parameters of the synthetic forward ISP. Construct through create() or
/// sample() so the color matrix is known to be well conditioned.
struct IspParams {
  std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
  std::array<double, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  double gamma = 1.0;
  double tone_knee = 1.0;
  std::uint64_t seed = 0;

  /// Sampling ranges.
  static constexpr double kGainMin = 0.5, kGainMax = 2.5;
  static constexpr double kGammaMin = 1.5, kGammaMax = 2.8;
  static constexpr double kKneeMin = 0.02, kKneeMax = 1.0;
  static constexpr double kMaxCondition = 1e3;

  static IspParams identity() { return {}; }
  static IspParams create(std::array<double, 3> gains, std::array<double, 9> matrix, double gamma, double knee,
                          std::uint64_t seed = 0);
  /// Draws parameters from the documented ranges; the matrix has nonnegative
  /// entries, unit row sums and a dominant diagonal.
  static IspParams sample(std::uint64_t seed);

  void validate() const;
  double condition_number() const;
  std::array<double, 9> inverse_matrix() const;
};

/// Smooth highlight compression: identity below the knee, exponential
/// approach to 1 above it (C1 at the knee). Strictly increasing.
double tone_curve(double x, double knee);
double inverse_tone_curve(double y, double knee);

/// White balance -> color matrix -> tone curve -> gamma encode -> clip to [0, 1].
Tensor forward_isp(const Tensor& raw, const IspParams& params);

struct InverseResult {
  Tensor raw;
  /// B x 1 x H x W; 1 where some channel is at 0 or within 1e-9 of 1.
  Tensor saturated;
};

/// Stage-by-stage analytic inverse. Exact on pixels the forward pass did not clip.
InverseResult inverse_isp(const Tensor& srgb, const IspParams& params);

struct SyntheticPair {
  Tensor srgb;
  Tensor raw;
  IspParams params;
};

/// Smooth RAW-like scene plus sampled parameters; deterministic per seed.
SyntheticPair make_synthetic_pair(std::uint64_t seed, std::int64_t size, std::int64_t size_multiple = 32);

}  // namespace rstisp::isp
