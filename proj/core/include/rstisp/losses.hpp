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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rstisp/autograd.hpp"
#include "rstisp/metrics.hpp"
#include "rstisp/random.hpp"

namespace rstisp::losses {

/// Weights of the four objective terms. lambda_gp = 10 is the usual WGAN-GP
/// weight; the others are tunable defaults.
struct LossWeights {
  double lambda_ssim = 1.0;
  double lambda_tv = 0.1;
  double lambda_adv = 0.01;
  double lambda_gp = 10.0;

  void validate() const;
};

/// Unweighted term values and their weighted total.
struct LossReport {
  double total = 0.0;
  std::map<std::string, double> per_term;
};

inline constexpr const char* kTermSsim = "ssim";
inline constexpr const char* kTermTv = "tv";
inline constexpr const char* kTermAdv = "adv";
inline constexpr const char* kTermGp = "gp";

/// 1 - MS-SSIM.
ag::Var ms_ssim_loss(const ag::Var& pred, const ag::Var& target, const metrics::MsSsimParams& params = {});

/// Anisotropic total variation: mean |horizontal difference| + mean |vertical difference|.
ag::Var tv_loss(const ag::Var& img);

struct AdversarialLosses {
  ag::Var g_loss;  // -mean(d_fake)
  ag::Var d_loss;  // mean(d_fake) - mean(d_real)
};
/// Wasserstein critic/generator losses over score tensors of any shape.
AdversarialLosses adversarial_losses(const ag::Var& d_real, const ag::Var& d_fake);

/// Maps a batch of images to a B x P tensor of critic scores. The per-sample
/// critic value is the mean over the P entries.
using Scorer = std::function<ag::Var(const ag::Var&)>;

/// A critic whose input-directional derivative can itself be differentiated
/// with respect to the critic's parameters.
class DifferentiableCritic {
 public:
  virtual ~DifferentiableCritic() = default;
  virtual ag::Var score(const ag::Var& x) const = 0;
  /// d/dt mean_p score(x + t * direction) per sample, as a length-B Var that
  /// is differentiable in the critic parameters.
  virtual ag::Var directional_derivative(const Tensor& x, const Tensor& direction) const = 0;
};

/// mean_b (||grad_x D(x_hat_b)||_2 - 1)^2 with x_hat = eps real + (1 - eps) fake,
/// eps ~ U(0, 1) drawn per sample from `rng`.
double gradient_penalty(const Scorer& critic, const Tensor& real, const Tensor& fake, Rng& rng);

struct GradientPenaltyTerm {
  double value = 0.0;
  std::vector<double> grad_norms;
  /// Scalar whose parameter gradient equals the penalty's parameter gradient.
  /// Its value is not the penalty.
  ag::Var surrogate;
};

/// Gradient penalty plus a differentiable surrogate for the critic update.
/// Consumes the same draws from `rng` as gradient_penalty().
GradientPenaltyTerm gradient_penalty_term(const DifferentiableCritic& critic, const Tensor& real,
                                          const Tensor& fake, Rng& rng);

struct CompositeLoss {
  ag::Var total;
  LossReport report;
};

/// lambda_ssim L_ssim + lambda_tv L_tv + lambda_adv L_adv + lambda_gp L_gp, where
/// L_adv is the generator's adversarial loss and the penalty enters as a constant.
CompositeLoss composite_loss(const ag::Var& pred, const ag::Var& target, const ag::Var& d_fake, double gp_value,
                             const LossWeights& weights, const metrics::MsSsimParams& ssim_params = {});

}  // namespace rstisp::losses
