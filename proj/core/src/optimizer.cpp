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

#include "rstisp/optimizer.hpp"

#include <cmath>

#include "rstisp/errors.hpp"

namespace rstisp {

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ContractError("Adam: learning rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("Adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("Adam: eps must be positive");
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  config_.validate();
  for (const auto& [name, p] : params.entries()) {
    m_.push_back(Tensor::zeros_like(p.value()));
    v_.push_back(Tensor::zeros_like(p.value()));
  }
}

void Adam::set_lr(double lr) {
  AdamConfig c = config_;
  c.lr = lr;
  c.validate();
  config_ = c;
}

void Adam::step() {
  auto& entries = params_->entries();
  if (entries.size() != m_.size()) throw ContractError("Adam: parameter set changed after construction");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ag::Var p = entries[k].second;
    const Tensor& g = p.grad();
    const bool has_grad = g.size() == p.value().size();
    Tensor& w = p.mutable_value();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::int64_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void Adam::load_state(std::int64_t step_count, std::vector<Tensor> first, std::vector<Tensor> second) {
  const auto& entries = params_->entries();
  if (first.size() != entries.size() || second.size() != entries.size()) {
    throw ContractError("Adam::load_state: moment count does not match the parameter set");
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (!first[k].same_shape(entries[k].second.value()) || !second[k].same_shape(entries[k].second.value())) {
      throw ContractError("Adam::load_state: moment shape mismatch for '" + entries[k].first + "'");
    }
  }
  if (step_count < 0) throw ContractError("Adam::load_state: negative step count");
  t_ = step_count;
  m_ = std::move(first);
  v_ = std::move(second);
}

}  // namespace rstisp
