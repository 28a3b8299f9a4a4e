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
#include "rstisp/tensor.hpp"

namespace rstisp::metrics {

/// Gaussian-window SSIM settings. Stabilizers are (k1 L)^2 and (k2 L)^2.
struct SsimParams {
  int window_size = 11;
  double sigma = 1.5;
  double max_val = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;

  void validate() const;
};

/// Canonical five-scale weights of multi-scale SSIM.
inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct MsSsimParams {
  SsimParams ssim;
  /// Number of scales (1..5). The first `scales` canonical weights are used,
  /// renormalized to sum to one.
  int scales = 5;

  void validate() const;
  std::vector<double> weights() const;
};

/// Normalized 1-D Gaussian taps of length `size`.
std::vector<double> gaussian_window(int size, double sigma);

/// Peak signal-to-noise ratio in dB; +inf when the images are identical.
double psnr(const Tensor& pred, const Tensor& target, double max_val = 1.0);

/// Mean of the valid-window SSIM map over every sample and channel.
double ssim(const Tensor& pred, const Tensor& target, const SsimParams& params = {});

/// Per-(sample, channel) means of the SSIM map and of the contrast-structure map.
struct SsimComponents {
  ag::Var ssim;  // B x C
  ag::Var cs;    // B x C
};
SsimComponents ssim_components(const ag::Var& x, const ag::Var& y, const SsimParams& params);

/// Largest usable scale count for an image whose smaller side is `min_side`.
int max_ms_ssim_scales(std::int64_t min_side, int window_size);

/// Differentiable multi-scale SSIM in [0, 1] (negative per-scale terms are clamped at zero).
ag::Var ms_ssim(const ag::Var& x, const ag::Var& y, const MsSsimParams& params);

}  // namespace rstisp::metrics
