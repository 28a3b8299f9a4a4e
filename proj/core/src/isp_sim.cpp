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

#include "rstisp/isp_sim.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "rstisp/errors.hpp"
#include "rstisp/random.hpp"

namespace rstisp::isp {

namespace {

Eigen::Matrix3d to_matrix(const std::array<double, 9>& m) {
  Eigen::Matrix3d out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m[static_cast<std::size_t>(r * 3 + c)];
  return out;
}

// Below this distance from white the tone curve's inverse loses all precision.
constexpr double kSaturationMargin = 1e-9;

void expect_image(const Tensor& t, const char* what) {
  expect_rank(t, 4, what);
  if (t.dim(1) != 3) throw ContractError(std::string(what) + ": expected 3 channels, got " + shape_to_string(t.shape()));
}

}  // namespace

IspParams IspParams::create(std::array<double, 3> gains, std::array<double, 9> matrix, double gamma, double knee,
                            std::uint64_t seed) {
  IspParams p{gains, matrix, gamma, knee, seed};
  p.validate();
  return p;
}

double IspParams::condition_number() const {
  const Eigen::Matrix3d m = to_matrix(color_matrix);
  // Singular values are the square roots of the eigenvalues of M^T M (ascending).
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m.transpose() * m, Eigen::EigenvaluesOnly);
  const Eigen::Vector3d ev = eig.eigenvalues();
  if (!(ev(0) > 0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(ev(2) / ev(0));
}

void IspParams::validate() const {
  for (double g : wb_gains) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ContractError("isp params: white-balance gains must be positive");
  }
  for (double v : color_matrix) {
    if (!std::isfinite(v)) throw ContractError("isp params: color matrix must be finite");
  }
  const double cond = condition_number();
  if (!(cond < kMaxCondition)) {
    throw ContractError("isp params: color matrix is singular or ill-conditioned (condition number " +
                        std::to_string(cond) + ")");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("isp params: gamma must be positive");
  if (!(tone_knee > 0.0 && tone_knee <= 1.0)) throw ContractError("isp params: tone knee must lie in (0, 1]");
}

std::array<double, 9> IspParams::inverse_matrix() const {
  const Eigen::Matrix3d inv = to_matrix(color_matrix).inverse();
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(r * 3 + c)] = inv(r, c);
  return out;
}

IspParams IspParams::sample(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  IspParams p;
  p.seed = seed;
  for (auto& g : p.wb_gains) g = rng.uniform(kGainMin, kGainMax);
  const double mix = rng.uniform(0.0, 0.5);
  for (int r = 0; r < 3; ++r) {
    double row[3], total = 0.0;
    for (double& v : row) {
      v = rng.uniform(0.05, 1.0);
      total += v;
    }
    for (int c = 0; c < 3; ++c) {
      p.color_matrix[static_cast<std::size_t>(r * 3 + c)] = (r == c ? 1.0 - mix : 0.0) + mix * row[c] / total;
    }
  }
  p.gamma = rng.uniform(kGammaMin, kGammaMax);
  p.tone_knee = rng.uniform(kKneeMin, kKneeMax);
  p.validate();
  return p;
}

double tone_curve(double x, double knee) {
  if (x <= knee || knee >= 1.0) return x;
  const double span = 1.0 - knee;
  return knee + span * -std::expm1(-(x - knee) / span);
}

double inverse_tone_curve(double y, double knee) {
  if (y <= knee || knee >= 1.0) return y;
  const double span = 1.0 - knee;
  const double frac = std::min((y - knee) / span, 1.0 - 1e-15);
  return knee - span * std::log1p(-frac);
}

Tensor forward_isp(const Tensor& raw, const IspParams& params) {
  params.validate();
  expect_image(raw, "forward_isp");
  const auto B = raw.dim(0), HW = raw.dim(2) * raw.dim(3);
  const auto& m = params.color_matrix;
  const double inv_gamma = 1.0 / params.gamma;
  Tensor out(raw.shape());
  for (std::int64_t b = 0; b < B; ++b) {
    const double* in = raw.data() + b * 3 * HW;
    double* o = out.data() + b * 3 * HW;
    for (std::int64_t p = 0; p < HW; ++p) {
      double v[3];
      for (int c = 0; c < 3; ++c) v[c] = params.wb_gains[static_cast<std::size_t>(c)] * in[c * HW + p];
      for (int c = 0; c < 3; ++c) {
        const double w = m[static_cast<std::size_t>(3 * c)] * v[0] + m[static_cast<std::size_t>(3 * c + 1)] * v[1] +
                         m[static_cast<std::size_t>(3 * c + 2)] * v[2];
        const double t = tone_curve(w, params.tone_knee);
        // Odd extension keeps the gamma stage strictly monotone below zero.
        const double g = std::copysign(std::pow(std::abs(t), inv_gamma), t);
        o[c * HW + p] = std::clamp(g, 0.0, 1.0);
      }
    }
  }
  return out;
}

InverseResult inverse_isp(const Tensor& srgb, const IspParams& params) {
  params.validate();
  expect_image(srgb, "inverse_isp");
  const auto B = srgb.dim(0), HW = srgb.dim(2) * srgb.dim(3);
  const auto minv = params.inverse_matrix();
  InverseResult r{Tensor(srgb.shape()), Tensor({B, 1, srgb.dim(2), srgb.dim(3)})};
  for (std::int64_t b = 0; b < B; ++b) {
    const double* in = srgb.data() + b * 3 * HW;
    double* o = r.raw.data() + b * 3 * HW;
    for (std::int64_t p = 0; p < HW; ++p) {
      double w[3];
      bool clipped = false;
      for (int c = 0; c < 3; ++c) {
        const double y = in[c * HW + p];
        clipped = clipped || y <= 0.0 || y >= 1.0 - kSaturationMargin;
        const double t = std::pow(std::clamp(y, 0.0, 1.0), params.gamma);
        w[c] = inverse_tone_curve(t, params.tone_knee);
      }
      for (int c = 0; c < 3; ++c) {
        const double v = minv[static_cast<std::size_t>(3 * c)] * w[0] +
                         minv[static_cast<std::size_t>(3 * c + 1)] * w[1] +
                         minv[static_cast<std::size_t>(3 * c + 2)] * w[2];
        o[c * HW + p] = std::clamp(v / params.wb_gains[static_cast<std::size_t>(c)], 0.0, 1.0);
      }
      r.saturated[b * HW + p] = clipped ? 1.0 : 0.0;
    }
  }
  return r;
}

SyntheticPair make_synthetic_pair(std::uint64_t seed, std::int64_t size, std::int64_t size_multiple) {
  if (size <= 0 || size_multiple <= 0 || size % size_multiple != 0) {
    throw ContractError("make_synthetic_pair: size " + std::to_string(size) + " must be a positive multiple of " +
                        std::to_string(size_multiple));
  }
  Rng rng(derive_seed(seed, 0));
  constexpr int kWaves = 4;
  struct Wave {
    double fx, fy, phase, amp;
  };
  auto draw_wave = [&rng](double amp_max) {
    return Wave{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 2.0 * std::numbers::pi),
                rng.uniform(0.2, 1.0) * amp_max};
  };
  Wave luminance[kWaves];
  for (auto& w : luminance) w = draw_wave(1.0);
  Wave chroma[3];
  double tint[3];
  for (int c = 0; c < 3; ++c) {
    chroma[c] = draw_wave(0.08);
    tint[c] = rng.uniform(0.6, 1.0);
  }
  const double lo = rng.uniform(0.02, 0.1);
  const double hi = rng.uniform(0.4, 0.8);

  const auto HW = size * size;
  std::vector<double> field(static_cast<std::size_t>(HW));
  double fmin = 1e300, fmax = -1e300;
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(size);
      const double v = static_cast<double>(y) / static_cast<double>(size);
      double s = 0.0;
      for (const auto& w : luminance) s += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
      field[static_cast<std::size_t>(y * size + x)] = s;
      fmin = std::min(fmin, s);
      fmax = std::max(fmax, s);
    }
  }
  const double range = std::max(fmax - fmin, 1e-12);
  Tensor raw({1, 3, size, size});
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(size);
      const double v = static_cast<double>(y) / static_cast<double>(size);
      const double lum = lo + (hi - lo) * (field[static_cast<std::size_t>(y * size + x)] - fmin) / range;
      for (int c = 0; c < 3; ++c) {
        const auto& w = chroma[c];
        const double wobble = w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
        raw.at(0, c, y, x) = std::clamp(lum * tint[c] * (1.0 + wobble), 0.0, 1.0);
      }
    }
  }
  SyntheticPair pair;
  pair.params = IspParams::sample(seed);
  pair.srgb = forward_isp(raw, pair.params);
  pair.raw = std::move(raw);
  return pair;
}

}  // namespace rstisp::isp
