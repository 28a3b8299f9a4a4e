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

#include <cstdint>
#include <vector>

#include "rstisp/layers.hpp"

namespace rstisp {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam without weight decay over every entry of a ParameterSet.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  /// Applies one update from the accumulated grads. A parameter without a grad
  /// is treated as having a zero gradient.
  void step();

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr);
  std::int64_t step_count() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  /// Restores state saved from an optimizer over the same parameter layout.
  void load_state(std::int64_t step_count, std::vector<Tensor> first, std::vector<Tensor> second);

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace rstisp
