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

#include "rstisp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rstisp/errors.hpp"
#include "rstisp/ops.hpp"

namespace rstisp::metrics {

using ag::Var;

void SsimParams::validate() const {
  if (window_size < 1) throw ContractError("ssim: window_size must be >= 1");
  if (!(sigma > 0.0)) throw ContractError("ssim: sigma must be positive");
  if (!(max_val > 0.0)) throw ContractError("ssim: max_val must be positive");
  if (k1 < 0.0 || k2 < 0.0) throw ContractError("ssim: stabilizer constants must be nonnegative");
}

void MsSsimParams::validate() const {
  ssim.validate();
  if (scales < 1 || scales > 5) {
    throw ContractError("ms_ssim: scale count must be in [1, 5], got " + std::to_string(scales));
  }
}

std::vector<double> MsSsimParams::weights() const {
  validate();
  std::vector<double> w(kMsSsimWeights, kMsSsimWeights + scales);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= total;
  return g;
}

double psnr(const Tensor& pred, const Tensor& target, double max_val) {
  expect_same_shape(pred, target, "psnr");
  if (!(max_val > 0.0)) throw ContractError("psnr: max_val must be positive");
  if (pred.size() == 0) throw ContractError("psnr: empty images");
  double se = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

SsimComponents ssim_components(const Var& x, const Var& y, const SsimParams& params) {
  params.validate();
  expect_same_shape(x.value(), y.value(), "ssim");
  expect_rank(x.value(), 4, "ssim");
  const auto h = x.dim(2), w = x.dim(3);
  if (h < params.window_size || w < params.window_size) {
    throw ContractError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                        " is smaller than the window; minimum size is " + std::to_string(params.window_size) + "x" +
                        std::to_string(params.window_size));
  }
  const auto win = gaussian_window(params.window_size, params.sigma);
  auto blur = [&win](const Var& v) { return ops::filter_h_valid(ops::filter_w_valid(v, win), win); };
  const double c1 = std::pow(params.k1 * params.max_val, 2);
  const double c2 = std::pow(params.k2 * params.max_val, 2);

  Var mu1 = blur(x), mu2 = blur(y);
  Var mu1_sq = ops::square(mu1), mu2_sq = ops::square(mu2), mu12 = ops::mul(mu1, mu2);
  Var s11 = ops::sub(blur(ops::square(x)), mu1_sq);
  Var s22 = ops::sub(blur(ops::square(y)), mu2_sq);
  Var s12 = ops::sub(blur(ops::mul(x, y)), mu12);

  Var cs_map = ops::div(ops::add_scalar(ops::mul_scalar(s12, 2.0), c2), ops::add_scalar(ops::add(s11, s22), c2));
  Var lum = ops::div(ops::add_scalar(ops::mul_scalar(mu12, 2.0), c1), ops::add_scalar(ops::add(mu1_sq, mu2_sq), c1));
  Var ssim_map = ops::mul(lum, cs_map);
  return {ops::mean_spatial(ssim_map), ops::mean_spatial(cs_map)};
}

double ssim(const Tensor& pred, const Tensor& target, const SsimParams& params) {
  ag::NoGradGuard no_grad;
  auto comps = ssim_components(Var(pred), Var(target), params);
  return ops::mean(comps.ssim).item();
}

int max_ms_ssim_scales(std::int64_t min_side, int window_size) {
  int n = 0;
  while (min_side >= window_size && min_side > 0) {
    ++n;
    min_side /= 2;
  }
  return n;
}

Var ms_ssim(const Var& x, const Var& y, const MsSsimParams& params) {
  const auto weights = params.weights();
  expect_rank(x.value(), 4, "ms_ssim");
  const int feasible = max_ms_ssim_scales(std::min(x.dim(2), x.dim(3)), params.ssim.window_size);
  if (feasible < params.scales) {
    throw ContractError("ms_ssim: image " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                        " supports at most " + std::to_string(feasible) + " scales with window " +
                        std::to_string(params.ssim.window_size) + ", requested " + std::to_string(params.scales));
  }
  Var a = x, b = y;
  Var product;
  for (int s = 0; s < params.scales; ++s) {
    auto comps = ssim_components(a, b, params.ssim);
    const bool last = s + 1 == params.scales;
    Var term = ops::pow_scalar(ops::relu(last ? comps.ssim : comps.cs), weights[static_cast<std::size_t>(s)]);
    product = product.defined() ? ops::mul(product, term) : term;
    if (!last) {
      a = ops::avg_pool2(a);
      b = ops::avg_pool2(b);
    }
  }
  return ops::mean(product);
}

}  // namespace rstisp::metrics
