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

#include "rstisp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>

#include "rstisp/errors.hpp"
#include "rstisp/metrics.hpp"
#include "rstisp/ops.hpp"

namespace rstisp::train {

namespace fs = std::filesystem;
using ag::Var;

namespace {

// derive_seed streams of the run seed.
constexpr std::uint64_t kStreamGenerator = 1;
constexpr std::uint64_t kStreamCritic = 2;
constexpr std::uint64_t kStreamPenalty = 3;
constexpr std::uint64_t kStreamOrder = 1000;

AdamConfig adam_config(const TrainConfig& cfg, double lr) { return {lr, cfg.beta1, cfg.beta2, cfg.adam_eps}; }

void check_finite(double v, std::int64_t step, const std::string& term) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite loss at step " + std::to_string(step) + " in term '" + term + "'");
  }
}

}  // namespace

Batch make_batch(const PairSource& source, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("make_batch: no indices");
  std::vector<Tensor> srgb, raw;
  for (auto i : indices) {
    data::ImagePair p = source.get(i);
    if (!p.srgb.same_shape(p.raw)) throw ContractError("pair '" + p.id + "': sRGB and RAW shapes differ");
    srgb.push_back(std::move(p.srgb));
    raw.push_back(std::move(p.raw));
  }
  return {stack_batch(srgb), stack_batch(raw)};
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
  Rng rng(derive_seed(seed, kStreamOrder + static_cast<std::uint64_t>(epoch)));
  return rng.permutation(n);
}

std::int64_t steps_per_epoch(std::size_t n, std::int64_t batch_size) {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  return (static_cast<std::int64_t>(n) + batch_size - 1) / batch_size;
}

std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::size_t n, std::int64_t step) {
  if (n == 0) throw ContractError("dataset is empty");
  const std::int64_t per_epoch = steps_per_epoch(n, cfg.batch_size);
  const std::int64_t epoch = step / per_epoch;
  const std::int64_t pos = step % per_epoch;
  const auto order = epoch_order(cfg.seed, epoch, n);
  const auto begin = static_cast<std::size_t>(pos * cfg.batch_size);
  const auto end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

TrainState TrainState::create(const TrainConfig& cfg) {
  cfg.weights.validate();
  net::ModelConfig model = cfg.model;
  model.seed = derive_seed(cfg.seed, kStreamGenerator);
  net::CriticConfig critic = cfg.critic;
  critic.seed = derive_seed(cfg.seed, kStreamCritic);
  TrainState s;
  s.generator = std::make_unique<net::Generator>(model);
  s.critic = std::make_unique<net::WaveletCritic>(critic);
  s.opt_g = std::make_unique<Adam>(s.generator->parameters(), adam_config(cfg, cfg.lr_g));
  s.opt_d = std::make_unique<Adam>(s.critic->parameters(), adam_config(cfg, cfg.lr_d));
  s.rng = Rng(derive_seed(cfg.seed, kStreamPenalty));
  return s;
}

metrics::MsSsimParams ms_ssim_params_for(const TrainConfig& cfg, std::int64_t height, std::int64_t width) {
  metrics::MsSsimParams p;
  const int feasible = metrics::max_ms_ssim_scales(std::min(height, width), p.ssim.window_size);
  if (feasible < 1) {
    throw ContractError("training crop " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than the SSIM window");
  }
  p.scales = cfg.ms_ssim_scales > 0 ? cfg.ms_ssim_scales : std::min(5, feasible);
  return p;
}

StepReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg) {
  expect_same_shape(batch.srgb, batch.raw, "train_step batch");
  const std::int64_t step = state.step;
  const auto ms_params = ms_ssim_params_for(cfg, batch.srgb.dim(2), batch.srgb.dim(3));
  StepReport report;

  // Critic updates leave the generator untouched, so one generator pass
  // serves both the critic's fake batch and the generator update.
  state.generator->parameters().zero_grad();
  const Var pred = state.generator->forward(Var(batch.srgb));
  const Tensor& fake = pred.value();

  for (int k = 0; k < cfg.critic_steps_per_gen_step; ++k) {
    state.critic->parameters().zero_grad();
    const Var d_real = state.critic->score(Var(batch.raw));
    const Var d_fake = state.critic->score(Var(fake));
    const Var d_loss = losses::adversarial_losses(d_real, d_fake).d_loss;
    const auto gp = losses::gradient_penalty_term(*state.critic, batch.raw, fake, state.rng);
    check_finite(d_loss.item(), step, "d_loss");
    check_finite(gp.value, step, losses::kTermGp);
    ag::backward(ops::add(d_loss, ops::mul_scalar(gp.surrogate, cfg.weights.lambda_gp)));
    state.opt_d->step();
    report.d_loss = d_loss.item();
    report.gp = gp.value;
  }

  const Var d_fake = state.critic->score(pred);
  losses::CompositeLoss loss;
  try {
    loss = losses::composite_loss(pred, Var(batch.raw), d_fake, report.gp, cfg.weights, ms_params);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step) + ": " + e.what());
  }
  ag::backward(loss.total);
  state.opt_g->step();
  state.critic->parameters().zero_grad();

  state.step = step + 1;
  report.step = state.step;
  report.generator = loss.report;
  report.batch_psnr = metrics::psnr(pred.value(), batch.raw);
  return report;
}

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg) {
  Checkpoint c;
  c.step = state.step;
  c.config_json = to_json(cfg);
  c.rng_state = state.rng.serialize();
  c.counters["opt_g.t"] = state.opt_g->step_count();
  c.counters["opt_d.t"] = state.opt_d->step_count();
  const auto add_set = [&](const std::string& prefix, const ParameterSet& params, const Adam& opt) {
    for (const auto& [name, v] : params.entries()) c.tensors.emplace_back(prefix + "/" + name, v.value());
    const auto& entries = params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      c.tensors.emplace_back(prefix + ".adam_m/" + entries[k].first, opt.first_moments()[k]);
      c.tensors.emplace_back(prefix + ".adam_v/" + entries[k].first, opt.second_moments()[k]);
    }
  };
  add_set("generator", state.generator->parameters(), *state.opt_g);
  add_set("critic", state.critic->parameters(), *state.opt_d);
  return c;
}

TrainState restore_state(const Checkpoint& ckpt, TrainConfig* cfg_out) {
  const TrainConfig cfg = train_config_from_json(ckpt.config_json);
  TrainState s = TrainState::create(cfg);
  s.step = ckpt.step;
  s.rng.deserialize(ckpt.rng_state);
  const auto load_set = [&](const std::string& prefix, ParameterSet& params, Adam& opt, const std::string& counter) {
    std::vector<Tensor> m, v;
    for (const auto& [name, var] : params.entries()) {
      const Tensor& t = ckpt.tensor(prefix + "/" + name);
      if (!t.same_shape(var.value())) {
        throw IoError("checkpoint tensor '" + prefix + "/" + name + "' has shape " + shape_to_string(t.shape()) +
                      ", model expects " + shape_to_string(var.value().shape()));
      }
      ag::Var p = var;
      p.mutable_value() = t;
      m.push_back(ckpt.tensor(prefix + ".adam_m/" + name));
      v.push_back(ckpt.tensor(prefix + ".adam_v/" + name));
    }
    const auto it = ckpt.counters.find(counter);
    if (it == ckpt.counters.end()) throw IoError("checkpoint lacks counter '" + counter + "'");
    opt.load_state(it->second, std::move(m), std::move(v));
  };
  load_set("generator", s.generator->parameters(), *s.opt_g, "opt_g.t");
  load_set("critic", s.critic->parameters(), *s.opt_d, "opt_d.t");
  if (cfg_out) *cfg_out = cfg;
  return s;
}

Model generator_model(const net::Generator& generator) {
  return [&generator](const Tensor& x) { return generator.infer(x); };
}

EvalResult evaluate(const Model& model, const PairSource& source) {
  return evaluate_pairs([&model](const data::ImagePair& p) { return model(p.srgb); }, source);
}

EvalResult evaluate_pairs(const PairModel& model, const PairSource& source) {
  if (source.size() == 0) throw ContractError("evaluate: dataset is empty");
  EvalResult r;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const data::ImagePair p = source.get(i);
    const Tensor pred = model(p);
    if (!pred.same_shape(p.raw)) {
      throw ContractError("evaluate: pair '" + p.id + "' prediction shape " + shape_to_string(pred.shape()) +
                          " differs from target " + shape_to_string(p.raw.shape()));
    }
    r.mean_psnr += metrics::psnr(pred, p.raw);
    r.mean_ssim += metrics::ssim(pred, p.raw);
    ++r.count;
  }
  r.mean_psnr /= static_cast<double>(r.count);
  r.mean_ssim /= static_cast<double>(r.count);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void save(const fs::path& dir, const TrainState& state, const TrainConfig& cfg, fs::path& last) {
  last = dir / checkpoint_filename(state.step);
  save_checkpoint(last, to_checkpoint(state, cfg));
}

}  // namespace

fs::path train(const TrainConfig& cfg, const PairSource& source, const TrainOptions& options) {
  cfg.validate();
  if (source.size() == 0) throw ContractError("train: dataset is empty");
  fs::create_directories(options.out_dir);

  TrainState state = options.resume ? restore_state(load_checkpoint(*options.resume)) : TrainState::create(cfg);
  // Schedule and rates follow the caller's config; weights and moments come from the checkpoint.
  state.opt_g->set_lr(cfg.lr_g);
  state.opt_d->set_lr(cfg.lr_d);

  fs::path last;
  if (cfg.epochs == 0) {
    save(options.out_dir, state, cfg, last);
    return last;
  }

  const std::int64_t per_epoch = steps_per_epoch(source.size(), cfg.batch_size);
  std::int64_t total = cfg.epochs * per_epoch;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
  const PairSource& eval_source = options.eval_source ? *options.eval_source : source;

  const fs::path metrics_path = options.out_dir / kMetricsFile;
  const bool fresh = !fs::exists(metrics_path) || fs::file_size(metrics_path) == 0;
  std::ofstream log(metrics_path, std::ios::app);
  if (!log) throw IoError("cannot write '" + metrics_path.string() + "'");
  if (fresh) log << kMetricsHeader << '\n';

  const auto load = [&](std::int64_t step) {
    const auto idx = batch_indices(cfg, source.size(), step);
    return make_batch(source, idx);
  };
  std::future<Batch> pending;
  if (cfg.prefetch && state.step < total) pending = std::async(std::launch::async, load, state.step);

  while (state.step < total) {
    const std::int64_t step = state.step;
    Batch batch = pending.valid() ? pending.get() : load(step);
    if (cfg.prefetch && step + 1 < total) pending = std::async(std::launch::async, load, step + 1);

    const StepReport r = train_step(state, batch, cfg);
    const std::int64_t epoch = step / per_epoch;
    const bool epoch_end = (step + 1) % per_epoch == 0;
    const bool run_end = state.step == total;
    std::string eval_psnr, eval_ssim;
    if (cfg.eval_every > 0 && ((epoch_end && (epoch + 1) % cfg.eval_every == 0) || run_end)) {
      const EvalResult e = evaluate(generator_model(*state.generator), eval_source);
      eval_psnr = fmt(e.mean_psnr);
      eval_ssim = fmt(e.mean_ssim);
    }
    const auto& t = r.generator.per_term;
    log << state.step << ',' << epoch << ',' << fmt(r.generator.total) << ',' << fmt(t.at(losses::kTermSsim)) << ','
        << fmt(t.at(losses::kTermTv)) << ',' << fmt(t.at(losses::kTermAdv)) << ',' << fmt(t.at(losses::kTermGp)) << ','
        << fmt(r.d_loss) << ',' << fmt(r.batch_psnr) << ',' << eval_psnr << ',' << eval_ssim << '\n';
    log.flush();
    if (options.on_step) options.on_step(r);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && !run_end) {
      save(options.out_dir, state, cfg, last);
    }
  }
  save(options.out_dir, state, cfg, last);
  return last;
}

}  // namespace rstisp::train
