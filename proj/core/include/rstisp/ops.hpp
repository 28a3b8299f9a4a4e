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

#include <span>
#include <vector>

#include "rstisp/autograd.hpp"

/// Differentiable tensor operations. Image tensors are B x C x H x W.
namespace rstisp::ops {

using ag::Var;

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& x);
Var add_scalar(const Var& x, double s);
Var mul_scalar(const Var& x, double s);
Var pow_scalar(const Var& x, double p);
Var square(const Var& x);
Var abs(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var softplus(const Var& x);

// Reductions.
Var sum(const Var& x);
Var mean(const Var& x);
/// B x C x H x W -> B x C.
Var mean_spatial(const Var& x);
/// B x ... -> B.
Var mean_per_sample(const Var& x);

// Shape manipulation.
Var reshape(const Var& x, Shape shape);
Var concat_channels(std::span<const Var> xs);
Var slice_channels(const Var& x, std::int64_t start, std::int64_t count);
/// Columns [start, start + count) of a B x N matrix.
Var slice_cols(const Var& x, std::int64_t start, std::int64_t count);

/// Cross-correlation with zero padding. `bias` may be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
/// x: B x Din, weight: Dout x Din, bias: Dout (may be undefined).
Var linear(const Var& x, const Var& weight, const Var& bias);

/// B x (C r^2) x H x W -> B x C x rH x rW, out[c, h r + i, w r + j] = in[c r^2 + i r + j, h, w].
Var pixel_shuffle(const Var& x, int r);
Var pixel_unshuffle(const Var& x, int r);

/// Orthonormal single-level Haar analysis; output channels are [LL, LH, HL, HH],
/// each block of C channels at half resolution.
Var haar_dwt(const Var& x);
Var haar_idwt(const Var& subbands);

/// 2x2 average pooling; odd trailing rows/columns are dropped.
Var avg_pool2(const Var& x);

/// Valid 1-D correlation along W (resp. H) with a fixed kernel, per channel.
Var filter_w_valid(const Var& x, std::span<const double> kernel);
Var filter_h_valid(const Var& x, std::span<const double> kernel);

/// Forward differences x[..., w+1] - x[..., w] (resp. along H).
Var diff_w(const Var& x);
Var diff_h(const Var& x);

/// Per (sample, channel): (x - mean) / sqrt(var + eps), population variance.
Var instance_norm(const Var& x, double eps);
/// y[b,c] = scale[b,c] * x[b,c] + shift[b,c]; scale and shift are B x C.
Var channel_affine(const Var& x, const Var& scale, const Var& shift);

/// B x K x H x W -> B x K x K with G[i][j] = sum_p f_i(p) f_j(p) / divisor.
Var gram(const Var& x, double divisor);

}  // namespace rstisp::ops
