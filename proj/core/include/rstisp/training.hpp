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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rstisp/checkpoint.hpp"
#include "rstisp/config.hpp"
#include "rstisp/critic.hpp"
#include "rstisp/data_io.hpp"
#include "rstisp/network.hpp"
#include "rstisp/optimizer.hpp"

namespace rstisp::train {

/// Random-access view of image pairs.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::size_t size() const = 0;
  virtual data::ImagePair get(std::size_t i) const = 0;
};

class InMemorySource final : public PairSource {
 public:
  explicit InMemorySource(std::vector<data::ImagePair> pairs) : pairs_(std::move(pairs)) {}
  std::size_t size() const override { return pairs_.size(); }
  data::ImagePair get(std::size_t i) const override { return pairs_.at(i); }

 private:
  std::vector<data::ImagePair> pairs_;
};

/// Decodes from disk on every access.
class IndexedSource final : public PairSource {
 public:
  explicit IndexedSource(data::DatasetIndex index) : index_(std::move(index)) {}
  std::size_t size() const override { return index_.size(); }
  data::ImagePair get(std::size_t i) const override { return data::load_pair(index_, i); }
  const data::DatasetIndex& index() const { return index_; }

 private:
  data::DatasetIndex index_;
};

struct Batch {
  Tensor srgb;  // B x 3 x H x W
  Tensor raw;   // B x 3 x H x W
};

Batch make_batch(const PairSource& source, std::span<const std::size_t> indices);

/// Pair order of one epoch, a permutation derived from (seed, epoch) alone.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n);
/// Batches per epoch; the last one may be short.
std::int64_t steps_per_epoch(std::size_t n, std::int64_t batch_size);
/// Indices fed to generator step `step` (0-based).
std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::size_t n, std::int64_t step);

/// Mutable run state. Held through pointers so optimizers keep valid
/// references to the parameter sets when the state moves.
struct TrainState {
  std::int64_t step = 0;
  std::unique_ptr<net::Generator> generator;
  std::unique_ptr<net::WaveletCritic> critic;
  std::unique_ptr<Adam> opt_g;
  std::unique_ptr<Adam> opt_d;
  Rng rng;

  static TrainState create(const TrainConfig& cfg);
};

struct StepReport {
  std::int64_t step = 0;  // counter after the update
  losses::LossReport generator;
  double d_loss = 0.0;
  double gp = 0.0;
  double batch_psnr = 0.0;
};

/// MS-SSIM settings used for a crop of the given size.
metrics::MsSsimParams ms_ssim_params_for(const TrainConfig& cfg, std::int64_t height, std::int64_t width);

/// critic_steps_per_gen_step critic updates on d_loss + lambda_gp * penalty,
/// then one generator update on the weighted objective. Throws NumericError
/// naming the step and term if any loss is not finite.
StepReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg);

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg);
/// Rebuilds the state saved by to_checkpoint. When `cfg_out` is given it
/// receives the stored configuration.
TrainState restore_state(const Checkpoint& ckpt, TrainConfig* cfg_out = nullptr);

using Model = std::function<Tensor(const Tensor&)>;
Model generator_model(const net::Generator& generator);

struct EvalResult {
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t count = 0;
};

/// Arithmetic means of per-pair PSNR and SSIM between model(srgb) and raw.
EvalResult evaluate(const Model& model, const PairSource& source);

/// Same, for models that need the whole pair (e.g. a per-pair ISP oracle).
using PairModel = std::function<Tensor(const data::ImagePair&)>;
EvalResult evaluate_pairs(const PairModel& model, const PairSource& source);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  /// Evaluation set; the training set when null.
  const PairSource* eval_source = nullptr;
  std::function<void(const StepReport&)> on_step;
};

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kMetricsHeader = "step,epoch,total,ssim,tv,adv,gp,d_loss,batch_psnr,eval_psnr,eval_ssim";

/// Runs the epoch budget (capped by max_steps), appending one metrics row per
/// step and writing ckpt_<step>.bin periodically and at the end. Returns the
/// final checkpoint path. epochs = 0 writes only the initial checkpoint.
std::filesystem::path train(const TrainConfig& cfg, const PairSource& source, const TrainOptions& options);

}  // namespace rstisp::train
