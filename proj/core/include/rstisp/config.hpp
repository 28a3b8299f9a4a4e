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
#include <filesystem>
#include <string>

#include "rstisp/critic.hpp"
#include "rstisp/losses.hpp"
#include "rstisp/network.hpp"

namespace rstisp::train {

/// Everything a training run depends on. Model and critic initialization,
/// the data order and the penalty draws are all derived from `seed`, so the
/// seeds inside `model` and `critic` are ignored here.
struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  std::int64_t batch_size = 8;
  std::int64_t epochs = 101;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  losses::LossWeights weights;
  std::uint64_t seed = 0;
  int critic_steps_per_gen_step = 1;
  /// Steps between periodic checkpoints; 0 writes only the final one.
  std::int64_t checkpoint_every = 0;
  /// Epochs between evaluations of the training set; 0 disables.
  std::int64_t eval_every = 1;
  /// Hard cap on generator steps; 0 means no cap.
  std::int64_t max_steps = 0;
  /// MS-SSIM scales; 0 picks as many as the crop size allows (at most 5).
  int ms_ssim_scales = 0;
  /// Load the next batch on a worker thread. Batch order is unaffected.
  bool prefetch = false;
  net::ModelConfig model;
  net::CriticConfig critic;

  void validate() const;
};

std::string to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected. `model` may
/// give `width_multiplier` instead of explicit widths.
TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Sets one dotted key such as "weights.lambda_tv" or "model.latent_dim".
/// `value` is parsed as JSON, falling back to a plain string.
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace rstisp::train
