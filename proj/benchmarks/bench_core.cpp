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

#include <benchmark/benchmark.h>

#include "rstisp/isp_sim.hpp"
#include "rstisp/metrics.hpp"
#include "rstisp/network.hpp"
#include "rstisp/ops.hpp"
#include "rstisp/training.hpp"

namespace {

using namespace rstisp;
using ag::Var;

// args: channels, spatial side
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto C = state.range(0), S = state.range(1);
  Rng rng(1);
  const Var x(rng.normal_tensor({8, C, S, S}), true);
  const Var w(rng.normal_tensor({C, C, 3, 3}, 0.0, 0.1), true);
  const Var b(Tensor({C}), true);
  for (auto _ : state) {
    Var y = ops::conv2d(x, w, b, 1, 1);
    ag::backward(ops::mean(y));
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * C * C * 9 * S * S);
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({16, 64})->Args({32, 32})->Args({128, 4})->Unit(benchmark::kMillisecond);

void BM_GeneratorInfer(benchmark::State& state) {
  const net::Generator g(net::ModelConfig::with_width_multiplier(0.25));
  Rng rng(2);
  const auto side = state.range(0);
  const Tensor x = rng.uniform_tensor({1, 3, side, side}, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(g.infer(x).data());
}
BENCHMARK(BM_GeneratorInfer)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_MsSsim(benchmark::State& state) {
  Rng rng(3);
  const Tensor a = rng.uniform_tensor({8, 3, 64, 64}, 0, 1), b = rng.uniform_tensor({8, 3, 64, 64}, 0, 1);
  metrics::MsSsimParams p;
  p.scales = metrics::max_ms_ssim_scales(64, 11);
  ag::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ms_ssim(Var(a), Var(b), p).item());
}
BENCHMARK(BM_MsSsim)->Unit(benchmark::kMillisecond);

void BM_TrainStepDesk(benchmark::State& state) {
  train::TrainConfig cfg;
  cfg.model = net::ModelConfig::with_width_multiplier(0.25);
  auto s = train::TrainState::create(cfg);
  train::Batch batch;
  auto p = isp::make_synthetic_pair(4, 64);
  std::vector<Tensor> srgb(8, p.srgb), raw(8, p.raw);
  batch.srgb = stack_batch(srgb);
  batch.raw = stack_batch(raw);
  for (auto _ : state) benchmark::DoNotOptimize(train::train_step(s, batch, cfg).generator.total);
}
BENCHMARK(BM_TrainStepDesk)->Unit(benchmark::kMillisecond)->Iterations(5);

void BM_ForwardIsp(benchmark::State& state) {
  Rng rng(5);
  const Tensor raw = rng.uniform_tensor({1, 3, 504, 504}, 0, 1);
  const auto params = isp::IspParams::sample(9);
  for (auto _ : state) benchmark::DoNotOptimize(isp::forward_isp(raw, params).data());
}
BENCHMARK(BM_ForwardIsp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
