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

#include "rstisp/losses.hpp"

#include <cmath>

#include "rstisp/errors.hpp"
#include "rstisp/ops.hpp"

namespace rstisp::losses {

using ag::Var;

void LossWeights::validate() const {
  const std::pair<const char*, double> items[] = {
      {"lambda_ssim", lambda_ssim}, {"lambda_tv", lambda_tv}, {"lambda_adv", lambda_adv}, {"lambda_gp", lambda_gp}};
  for (const auto& [name, v] : items) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ContractError(std::string("loss weight ") + name + " must be finite and nonnegative");
    }
  }
}

Var ms_ssim_loss(const Var& pred, const Var& target, const metrics::MsSsimParams& params) {
  return ops::add_scalar(ops::neg(metrics::ms_ssim(pred, target, params)), 1.0);
}

Var tv_loss(const Var& img) {
  expect_rank(img.value(), 4, "tv_loss");
  if (img.dim(2) < 2 || img.dim(3) < 2) {
    throw ContractError("tv_loss: spatial dims must be at least 2x2, got " + shape_to_string(img.shape()));
  }
  return ops::add(ops::mean(ops::abs(ops::diff_w(img))), ops::mean(ops::abs(ops::diff_h(img))));
}

AdversarialLosses adversarial_losses(const Var& d_real, const Var& d_fake) {
  if (!d_real.defined() || !d_fake.defined() || d_real.value().size() == 0 || d_fake.value().size() == 0) {
    throw ContractError("adversarial_losses: empty score tensor");
  }
  Var fake_mean = ops::mean(d_fake);
  return {ops::neg(fake_mean), ops::sub(fake_mean, ops::mean(d_real))};
}

namespace {

struct Interpolation {
  Tensor x_hat;
  std::vector<double> eps;
};

Interpolation interpolate(const Tensor& real, const Tensor& fake, Rng& rng) {
  expect_same_shape(real, fake, "gradient_penalty");
  if (real.rank() < 1 || real.dim(0) == 0) throw ContractError("gradient_penalty: empty batch");
  const auto B = real.dim(0);
  const auto per = real.size() / B;
  Interpolation out{Tensor(real.shape()), std::vector<double>(static_cast<std::size_t>(B))};
  for (std::int64_t b = 0; b < B; ++b) {
    const double e = rng.uniform();
    out.eps[static_cast<std::size_t>(b)] = e;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) out.x_hat[i] = e * real[i] + (1.0 - e) * fake[i];
  }
  return out;
}

// Per-sample input gradients of the per-sample critic value at x_hat.
Tensor input_gradient(const Scorer& critic, const Tensor& x_hat) {
  Var x(x_hat, true);
  Var per_sample = ops::mean_per_sample(critic(x));
  for (std::int64_t b = 0; b < per_sample.value().size(); ++b) {
    if (!std::isfinite(per_sample.value()[b])) {
      throw NumericError("gradient_penalty: non-finite critic score for sample " + std::to_string(b));
    }
  }
  return ag::grad(ops::sum(per_sample), {x})[0];
}

std::vector<double> per_sample_norms(const Tensor& g) {
  const auto B = g.dim(0);
  const auto per = g.size() / B;
  std::vector<double> norms(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) s += g[i] * g[i];
    norms[static_cast<std::size_t>(b)] = std::sqrt(s);
  }
  return norms;
}

double penalty_from_norms(const std::vector<double>& norms) {
  double s = 0.0;
  for (double n : norms) s += (n - 1.0) * (n - 1.0);
  return s / static_cast<double>(norms.size());
}

}  // namespace

double gradient_penalty(const Scorer& critic, const Tensor& real, const Tensor& fake, Rng& rng) {
  auto interp = interpolate(real, fake, rng);
  const auto norms = per_sample_norms(input_gradient(critic, interp.x_hat));
  return penalty_from_norms(norms);
}

GradientPenaltyTerm gradient_penalty_term(const DifferentiableCritic& critic, const Tensor& real,
                                          const Tensor& fake, Rng& rng) {
  auto interp = interpolate(real, fake, rng);
  const Tensor g = input_gradient([&critic](const Var& x) { return critic.score(x); }, interp.x_hat);
  GradientPenaltyTerm out;
  out.grad_norms = per_sample_norms(g);
  out.value = penalty_from_norms(out.grad_norms);

  // d/dtheta ||g_b|| = d/dtheta <u_b, g_b(theta)> with u_b = g_b / ||g_b|| held fixed,
  // and <u_b, g_b> is the directional derivative of the critic along u_b.
  const auto B = g.dim(0);
  const auto per = g.size() / B;
  Tensor direction(g.shape());
  Tensor coeff({B});
  for (std::int64_t b = 0; b < B; ++b) {
    const double n = out.grad_norms[static_cast<std::size_t>(b)];
    if (n <= 0.0) continue;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) direction[i] = g[i] / n;
    coeff[b] = 2.0 * (n - 1.0) / static_cast<double>(B);
  }
  Var dd = critic.directional_derivative(interp.x_hat, direction);
  out.surrogate = ops::sum(ops::mul(dd, Var(coeff)));
  return out;
}

CompositeLoss composite_loss(const Var& pred, const Var& target, const Var& d_fake, double gp_value,
                             const LossWeights& weights, const metrics::MsSsimParams& ssim_params) {
  weights.validate();
  Var l_ssim = ms_ssim_loss(pred, target, ssim_params);
  Var l_tv = tv_loss(pred);
  Var l_adv = adversarial_losses(d_fake, d_fake).g_loss;

  CompositeLoss out;
  out.report.per_term = {{kTermSsim, l_ssim.item()}, {kTermTv, l_tv.item()}, {kTermAdv, l_adv.item()},
                         {kTermGp, gp_value}};
  for (const auto& [name, v] : out.report.per_term) {
    if (!std::isfinite(v)) throw NumericError("composite_loss: non-finite term '" + name + "'");
  }
  out.total = ops::add(ops::add(ops::mul_scalar(l_ssim, weights.lambda_ssim), ops::mul_scalar(l_tv, weights.lambda_tv)),
                       ops::mul_scalar(l_adv, weights.lambda_adv));
  out.total = ops::add_scalar(out.total, weights.lambda_gp * gp_value);
  out.report.total = out.total.item();
  return out;
}

}  // namespace rstisp::losses
