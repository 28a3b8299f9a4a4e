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

#include "rstisp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rstisp/errors.hpp"

namespace rstisp::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr_g > 0.0) || !(lr_d > 0.0) || !std::isfinite(lr_g) || !std::isfinite(lr_d)) {
    throw ContractError("train config: lr_g and lr_d must be positive");
  }
  if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
  if (epochs < 0) throw ContractError("train config: epochs must be >= 0");
  if (optimizer != "adam") throw ContractError("train config: unsupported optimizer '" + optimizer + "'");
  if (critic_steps_per_gen_step < 0) throw ContractError("train config: critic_steps_per_gen_step must be >= 0");
  if (checkpoint_every < 0 || eval_every < 0 || max_steps < 0) {
    throw ContractError("train config: checkpoint_every, eval_every and max_steps must be >= 0");
  }
  if (ms_ssim_scales < 0 || ms_ssim_scales > 5) throw ContractError("train config: ms_ssim_scales must be in 0..5");
  weights.validate();
  model.validate();
  critic.validate();
}

namespace {

json to_json_value(const TrainConfig& c) {
  const auto& w = c.weights;
  return json{
      {"lr_g", c.lr_g},
      {"lr_d", c.lr_d},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"optimizer", c.optimizer},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"weights",
       {{"lambda_ssim", w.lambda_ssim}, {"lambda_tv", w.lambda_tv}, {"lambda_adv", w.lambda_adv}, {"lambda_gp", w.lambda_gp}}},
      {"seed", c.seed},
      {"critic_steps_per_gen_step", c.critic_steps_per_gen_step},
      {"checkpoint_every", c.checkpoint_every},
      {"eval_every", c.eval_every},
      {"max_steps", c.max_steps},
      {"ms_ssim_scales", c.ms_ssim_scales},
      {"prefetch", c.prefetch},
      {"model",
       {{"n_levels", c.model.n_levels},
        {"encoder_widths", c.model.encoder_widths},
        {"stem_width", c.model.stem_width},
        {"decoder_blocks", c.model.decoder_blocks},
        {"upscale_factor", c.model.upscale_factor},
        {"latent_dim", c.model.latent_dim}}},
      {"critic", {{"scales", c.critic.scales}, {"width", c.critic.width}}},
  };
}

template <typename T>
void take(const json& obj, const char* key, T& out, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, const std::vector<std::string>& seen, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      throw ContractError("config: unknown key '" + where + key + "'");
    }
  }
}

TrainConfig from_json_value(const json& j) {
  if (!j.is_object()) throw ContractError("config: top level must be an object");
  TrainConfig c;
  std::vector<std::string> seen;
  take(j, "lr_g", c.lr_g, seen);
  take(j, "lr_d", c.lr_d, seen);
  take(j, "batch_size", c.batch_size, seen);
  take(j, "epochs", c.epochs, seen);
  take(j, "optimizer", c.optimizer, seen);
  take(j, "beta1", c.beta1, seen);
  take(j, "beta2", c.beta2, seen);
  take(j, "adam_eps", c.adam_eps, seen);
  take(j, "seed", c.seed, seen);
  take(j, "critic_steps_per_gen_step", c.critic_steps_per_gen_step, seen);
  take(j, "checkpoint_every", c.checkpoint_every, seen);
  take(j, "eval_every", c.eval_every, seen);
  take(j, "max_steps", c.max_steps, seen);
  take(j, "ms_ssim_scales", c.ms_ssim_scales, seen);
  take(j, "prefetch", c.prefetch, seen);
  seen.emplace_back("weights");
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    std::vector<std::string> ws;
    take(w, "lambda_ssim", c.weights.lambda_ssim, ws);
    take(w, "lambda_tv", c.weights.lambda_tv, ws);
    take(w, "lambda_adv", c.weights.lambda_adv, ws);
    take(w, "lambda_gp", c.weights.lambda_gp, ws);
    reject_unknown(w, ws, "weights.");
  }
  seen.emplace_back("model");
  if (j.contains("model")) {
    const json& m = j.at("model");
    std::vector<std::string> ms;
    double multiplier = 0.0;
    take(m, "width_multiplier", multiplier, ms);
    if (multiplier > 0.0) c.model = net::ModelConfig::with_width_multiplier(multiplier);
    take(m, "n_levels", c.model.n_levels, ms);
    take(m, "encoder_widths", c.model.encoder_widths, ms);
    take(m, "stem_width", c.model.stem_width, ms);
    take(m, "decoder_blocks", c.model.decoder_blocks, ms);
    take(m, "upscale_factor", c.model.upscale_factor, ms);
    take(m, "latent_dim", c.model.latent_dim, ms);
    reject_unknown(m, ms, "model.");
  }
  seen.emplace_back("critic");
  if (j.contains("critic")) {
    const json& k = j.at("critic");
    std::vector<std::string> ks;
    take(k, "scales", c.critic.scales, ks);
    take(k, "width", c.critic.width, ks);
    reject_unknown(k, ks, "critic.");
  }
  reject_unknown(j, seen, "");
  c.validate();
  return c;
}

}  // namespace

std::string to_json(const TrainConfig& cfg) { return to_json_value(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  try {
    return from_json_value(j);
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str());
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  json j = to_json_value(cfg);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json* node = &j;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ContractError("config: empty override key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
      throw ContractError("config: unknown key '" + key + "'");
    }
    node = &(*node)[parts[i]];
  }
  const bool derived = parts.size() == 2 && parts[0] == "model" && parts[1] == "width_multiplier";
  if (!derived && !node->contains(parts.back())) throw ContractError("config: unknown key '" + key + "'");
  if (derived) {
    // Replace the whole model block so the multiplier takes effect.
    const std::int64_t levels = j["model"]["n_levels"];
    if (levels != 5) throw ContractError("config: width_multiplier requires the 5-level layout");
    j["model"] = json{{"width_multiplier", parsed}};
  } else {
    (*node)[parts.back()] = parsed;
  }
  try {
    cfg = from_json_value(j);
  } catch (const json::exception& e) {
    throw ContractError("config: bad value for '" + key + "': " + e.what());
  }
}

}  // namespace rstisp::train
