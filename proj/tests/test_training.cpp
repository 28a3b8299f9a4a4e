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

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "rstisp/checkpoint.hpp"
#include "rstisp/config.hpp"
#include "rstisp/errors.hpp"
#include "rstisp/isp_sim.hpp"
#include "rstisp/metrics.hpp"
#include "rstisp/training.hpp"
#include "test_support.hpp"

namespace rstisp {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using train::TrainConfig;

TrainConfig small_config() {
  TrainConfig c;
  c.model.n_levels = 3;
  c.model.decoder_blocks = 2;
  c.model.encoder_widths = {4, 6, 8};
  c.model.stem_width = 4;
  c.model.latent_dim = 8;
  c.critic.scales = 2;
  c.critic.width = 4;
  c.batch_size = 2;
  c.lr_g = 1e-3;
  c.epochs = 2;
  c.seed = 11;
  return c;
}

train::InMemorySource synthetic_source(std::size_t n, std::int64_t size = 16) {
  std::vector<data::ImagePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = isp::make_synthetic_pair(100 + i, size, 8);
    pairs.push_back({"p" + std::to_string(i), p.srgb, p.raw});
  }
  return train::InMemorySource(std::move(pairs));
}

Tensor flatten(const ParameterSet& params) {
  std::vector<double> all;
  for (const auto& [name, p] : params.entries()) all.insert(all.end(), p.value().values().begin(), p.value().values().end());
  const auto n = static_cast<std::int64_t>(all.size());
  return Tensor({n}, std::move(all));
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.lr_g, 1e-4);
  EXPECT_EQ(c.lr_d, 4e-4);
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.weights.lambda_gp, 10.0);
  EXPECT_EQ(c.optimizer, "adam");
  EXPECT_NO_THROW(c.validate());
  TrainConfig bad;
  bad.lr_g = 0.0;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(TrainConfig, JsonRoundTripAndOverrides) {
  TrainConfig c = small_config();
  c.weights.lambda_tv = 0.25;
  const TrainConfig back = train::train_config_from_json(train::to_json(c));
  EXPECT_EQ(train::to_json(back), train::to_json(c));
  EXPECT_EQ(back.model.encoder_widths, c.model.encoder_widths);
  train::apply_override(c, "weights.lambda_adv", "0.5");
  EXPECT_EQ(c.weights.lambda_adv, 0.5);
  train::apply_override(c, "lr_g", "3e-4");
  EXPECT_EQ(c.lr_g, 3e-4);
  EXPECT_THROW(train::apply_override(c, "weights.nope", "1"), ContractError);
  EXPECT_THROW(train::train_config_from_json(R"({"lr_q": 1})"), ContractError);
  const auto wm = train::train_config_from_json(R"({"model": {"width_multiplier": 0.5}})");
  EXPECT_EQ(wm.model.encoder_widths, net::ModelConfig::with_width_multiplier(0.5).encoder_widths);
  EXPECT_EQ(train::train_config_from_json("{}").lr_d, 4e-4);
}

TEST(Schedule, EpochsVisitEveryPairOnce) {
  TrainConfig c = small_config();
  c.batch_size = 3;
  EXPECT_EQ(train::steps_per_epoch(7, 3), 3);
  for (std::int64_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    for (std::int64_t s = 0; s < 3; ++s) {
      for (auto i : train::batch_indices(c, 7, epoch * 3 + s)) seen.insert(i);
    }
    EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
  }
  EXPECT_EQ(train::batch_indices(c, 7, 2).size(), 1u);
  EXPECT_EQ(train::epoch_order(5, 1, 9), train::epoch_order(5, 1, 9));
  EXPECT_NE(train::epoch_order(5, 1, 9), train::epoch_order(5, 2, 9));
}

TEST(TrainStep, DeterministicForFixedSeed) {
  const auto cfg = small_config();
  const auto src = synthetic_source(2);
  const std::size_t idx[] = {0, 1};
  const auto batch = train::make_batch(src, idx);
  auto a = train::TrainState::create(cfg), b = train::TrainState::create(cfg);
  for (int i = 0; i < 3; ++i) {
    const auto ra = train::train_step(a, batch, cfg), rb = train::train_step(b, batch, cfg);
    EXPECT_EQ(ra.generator.total, rb.generator.total);
    EXPECT_EQ(ra.d_loss, rb.d_loss);
    EXPECT_GE(ra.gp, 0.0);
    EXPECT_EQ(ra.step, i + 1);
  }
  EXPECT_EQ(max_abs_diff(flatten(a.generator->parameters()), flatten(b.generator->parameters())), 0.0);
}

TEST(TrainStep, ZeroRatesLeaveEverythingUnchanged) {
  const auto cfg = small_config();
  const auto src = synthetic_source(2);
  const std::size_t idx[] = {0, 1};
  auto s = train::TrainState::create(cfg);
  s.opt_g->set_lr(0.0);
  s.opt_d->set_lr(0.0);
  const Tensor g0 = flatten(s.generator->parameters()), d0 = flatten(s.critic->parameters());
  train::train_step(s, train::make_batch(src, idx), cfg);
  EXPECT_EQ(max_abs_diff(flatten(s.generator->parameters()), g0), 0.0);
  EXPECT_EQ(max_abs_diff(flatten(s.critic->parameters()), d0), 0.0);
}

TEST(TrainStep, EachOptimizerOnlyMovesItsNetwork) {
  const auto cfg = small_config();
  const auto src = synthetic_source(2);
  const std::size_t idx[] = {0, 1};
  const auto batch = train::make_batch(src, idx);
  {
    auto s = train::TrainState::create(cfg);
    s.opt_g->set_lr(0.0);
    const Tensor g0 = flatten(s.generator->parameters()), d0 = flatten(s.critic->parameters());
    train::train_step(s, batch, cfg);
    EXPECT_EQ(max_abs_diff(flatten(s.generator->parameters()), g0), 0.0);
    EXPECT_GT(max_abs_diff(flatten(s.critic->parameters()), d0), 0.0);
  }
  {
    auto s = train::TrainState::create(cfg);
    s.opt_d->set_lr(0.0);
    const Tensor g0 = flatten(s.generator->parameters()), d0 = flatten(s.critic->parameters());
    train::train_step(s, batch, cfg);
    EXPECT_GT(max_abs_diff(flatten(s.generator->parameters()), g0), 0.0);
    EXPECT_EQ(max_abs_diff(flatten(s.critic->parameters()), d0), 0.0);
  }
}

TEST(TrainStep, ReducesReconstructionLossOnOnePair) {
  auto cfg = small_config();
  cfg.weights.lambda_adv = 0.0;
  cfg.weights.lambda_tv = 0.0;
  cfg.batch_size = 1;
  const auto src = synthetic_source(1);
  const std::size_t idx[] = {0};
  const auto batch = train::make_batch(src, idx);
  auto s = train::TrainState::create(cfg);
  const double first = train::train_step(s, batch, cfg).generator.per_term.at("ssim");
  double last = first;
  for (int i = 0; i < 30; ++i) last = train::train_step(s, batch, cfg).generator.per_term.at("ssim");
  EXPECT_LT(last, first);
}

TEST(Train, ZeroEpochsWritesOnlyInitialCheckpoint) {
  TempDir dir("e0");
  auto cfg = small_config();
  cfg.epochs = 0;
  const auto path = train::train(cfg, synthetic_source(2), {dir.path()});
  EXPECT_EQ(path.filename(), "ckpt_0.bin");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Train, EmptyDatasetRejected) {
  TempDir dir("empty");
  EXPECT_THROW(train::train(small_config(), train::InMemorySource({}), {dir.path()}), ContractError);
}

TEST(Train, MetricsRowPerStepAndResumeMatchesStraightRun) {
  const auto src = synthetic_source(3);
  auto cfg = small_config();
  cfg.checkpoint_every = 2;
  TempDir straight("straight"), resumed("resumed");
  std::vector<double> straight_losses, resumed_losses;
  train::TrainOptions a{straight.path()};
  a.on_step = [&](const train::StepReport& r) { straight_losses.push_back(r.generator.total); };
  const auto final_a = train::train(cfg, src, a);
  EXPECT_EQ(final_a.filename(), "ckpt_4.bin");
  EXPECT_EQ(count_lines(straight.path() / train::kMetricsFile), 5u);
  ASSERT_TRUE(fs::exists(straight.path() / "ckpt_2.bin"));

  train::TrainOptions b{resumed.path(), straight.path() / "ckpt_2.bin"};
  b.on_step = [&](const train::StepReport& r) { resumed_losses.push_back(r.generator.total); };
  const auto final_b = train::train(cfg, src, b);
  ASSERT_EQ(resumed_losses.size(), 2u);
  EXPECT_NEAR(resumed_losses[0], straight_losses[2], 1e-12);
  EXPECT_NEAR(resumed_losses[1], straight_losses[3], 1e-12);
  const auto ca = load_checkpoint(final_a), cb = load_checkpoint(final_b);
  ASSERT_EQ(ca.tensors.size(), cb.tensors.size());
  for (std::size_t i = 0; i < ca.tensors.size(); ++i) {
    EXPECT_EQ(ca.tensors[i].first, cb.tensors[i].first);
    EXPECT_LE(max_abs_diff(ca.tensors[i].second, cb.tensors[i].second), 1e-12) << ca.tensors[i].first;
  }
}

TEST(Train, PrefetchDoesNotChangeResults) {
  const auto src = synthetic_source(3);
  auto cfg = small_config();
  cfg.max_steps = 3;
  TempDir x("pf0"), y("pf1");
  const auto px = train::train(cfg, src, {x.path()});
  cfg.prefetch = true;
  const auto py = train::train(cfg, src, {y.path()});
  const auto cx = load_checkpoint(px), cy = load_checkpoint(py);
  for (std::size_t i = 0; i < cx.tensors.size(); ++i) {
    EXPECT_EQ(max_abs_diff(cx.tensors[i].second, cy.tensors[i].second), 0.0);
  }
}

TEST(Checkpoint, RoundTripAndVersionCheck) {
  TempDir dir("ckpt");
  Checkpoint c;
  c.step = 7;
  c.counters["opt_g.t"] = 7;
  c.tensors.emplace_back("a/x", Tensor({2, 2}, std::vector<double>{1, -2, 3.5, 1e-300}));
  const auto path = dir.path() / checkpoint_filename(7);
  EXPECT_EQ(path.filename(), "ckpt_7.bin");
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.step, 7);
  EXPECT_EQ(back.counters.at("opt_g.t"), 7);
  EXPECT_EQ(max_abs_diff(back.tensor("a/x"), c.tensors[0].second), 0.0);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put(2);
  }
  EXPECT_THROW(load_checkpoint(path), IoError);
  EXPECT_THROW(load_checkpoint(dir.path() / "none.bin"), IoError);
}

TEST(Checkpoint, RestoredStateContinuesIdentically) {
  const auto cfg = small_config();
  const auto src = synthetic_source(2);
  const std::size_t idx[] = {0, 1};
  const auto batch = train::make_batch(src, idx);
  auto s = train::TrainState::create(cfg);
  train::train_step(s, batch, cfg);
  TrainConfig stored;
  auto r = train::restore_state(train::to_checkpoint(s, cfg), &stored);
  EXPECT_EQ(train::to_json(stored), train::to_json(cfg));
  EXPECT_EQ(r.step, 1);
  EXPECT_EQ(train::train_step(s, batch, cfg).generator.total, train::train_step(r, batch, cfg).generator.total);
}

TEST(Evaluate, OracleInverseIsNearlyExact) {
  std::vector<data::ImagePair> pairs;
  std::map<std::string, isp::IspParams> params;
  for (int i = 0; i < 3; ++i) {
    auto p = isp::make_synthetic_pair(50 + i, 32);
    pairs.push_back({"q" + std::to_string(i), p.srgb, p.raw});
    params["q" + std::to_string(i)] = p.params;
  }
  const train::InMemorySource src(pairs);
  const auto r = train::evaluate_pairs(
      [&](const data::ImagePair& p) { return isp::inverse_isp(p.srgb, params.at(p.id)).raw; }, src);
  EXPECT_EQ(r.count, 3u);
  EXPECT_GT(r.mean_psnr, 50.0);
  EXPECT_NEAR(r.mean_ssim, 1.0, 1e-3);
  const auto id = train::evaluate([](const Tensor& x) { return x; }, src);
  EXPECT_NEAR(id.mean_psnr, (metrics::psnr(pairs[0].srgb, pairs[0].raw) + metrics::psnr(pairs[1].srgb, pairs[1].raw) +
                             metrics::psnr(pairs[2].srgb, pairs[2].raw)) / 3,
              1e-12);
  EXPECT_THROW(train::evaluate([](const Tensor& x) { return x; }, train::InMemorySource({})), ContractError);
  EXPECT_THROW(train::evaluate([](const Tensor&) { return Tensor({1, 3, 2, 2}); }, src), ContractError);
}

}  // namespace
}  // namespace rstisp
