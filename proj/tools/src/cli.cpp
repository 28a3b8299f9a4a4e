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

#include "rstisp/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "rstisp/data_io.hpp"
#include "rstisp/errors.hpp"
#include "rstisp/isp_sim.hpp"
#include "rstisp/training.hpp"

#ifndef RSTISP_VERSION
#define RSTISP_VERSION "unknown"
#endif

namespace rstisp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string one_line(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '\n' || c == '\r') {
      out += ' ';
    } else if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else {
      out += c;
    }
  }
  return out;
}

int fail(std::ostream& err, const char* code, const std::string& message, int exit_code) {
  err << "error: code=" << code << " message=\"" << one_line(message) << "\"\n";
  return exit_code;
}

/// Written before any work so an interrupted run is still self-describing.
void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                    const json& config, std::optional<std::uint64_t> seed, const json& outputs) {
  fs::create_directories(dir);
  json m{{"command", command},
         {"argv", args},
         {"config", config},
         {"code_version", RSTISP_VERSION},
         {"seed", seed ? json(*seed) : json(nullptr)},
         {"started_at", utc_now()},
         {"outputs", outputs}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
  out << m.dump(2) << '\n';
}

struct Options {
  std::string config;
  std::string data_dir;
  std::string track = "synth";
  std::string split = "train";
  std::string out;
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string model = "checkpoint";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::vector<std::string> sets;
  std::optional<std::int64_t> epochs, max_steps, batch_size;
  std::optional<double> lr_g, lr_d, width_multiplier;
  std::int64_t count = 8;
  std::int64_t size = 64;
  int channels = 3;
};

fs::path data_root(const Options& o) {
  if (!o.data_dir.empty()) return o.data_dir;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  throw UsageError(std::string("no dataset root: pass --data-dir or set ") + kDataRootEnv);
}

train::TrainConfig resolve_config(const Options& o) {
  train::TrainConfig cfg = o.config.empty() ? train::TrainConfig{} : train::load_train_config(o.config);
  // Flag precedence: --width-multiplier, then --set entries, then the named flags.
  if (o.width_multiplier) train::apply_override(cfg, "model.width_multiplier", std::to_string(*o.width_multiplier));
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    train::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.max_steps) cfg.max_steps = *o.max_steps;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.lr_g) cfg.lr_g = *o.lr_g;
  if (o.lr_d) cfg.lr_d = *o.lr_d;
  cfg.prefetch = !o.deterministic;
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
}

std::string fixed(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

int run_train(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require(o.out, "--out");
  const train::TrainConfig cfg = resolve_config(o);
  const fs::path root = data_root(o);
  const data::Track track = data::parse_track(o.track);
  const fs::path out_dir = o.out;
  write_manifest(out_dir, "train", args, json::parse(train::to_json(cfg)), cfg.seed,
                 {{"dir", out_dir.string()}, {"metrics", (out_dir / train::kMetricsFile).string()}});

  train::IndexedSource source(data::DatasetIndex::open(root, track, o.split));
  train::TrainOptions opts;
  opts.out_dir = out_dir;
  if (!o.checkpoint.empty()) opts.resume = o.checkpoint;
  const fs::path final_ckpt = train::train(cfg, source, opts);
  out << "checkpoint=" << final_ckpt.string() << '\n';
  return kExitOk;
}

train::TrainState load_model(const std::string& checkpoint) {
  require(checkpoint, "--checkpoint");
  return train::restore_state(load_checkpoint(checkpoint));
}

int run_eval(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const fs::path root = data_root(o);
  const data::DatasetIndex index = data::DatasetIndex::open(root, data::parse_track(o.track), o.split);
  if (!o.out.empty()) {
    write_manifest(o.out, "eval", args, json{{"model", o.model}, {"checkpoint", o.checkpoint}}, o.seed,
                   {{"dir", o.out}});
  }
  train::IndexedSource source(index);
  train::EvalResult r;
  if (o.model == "checkpoint") {
    const train::TrainState state = load_model(o.checkpoint);
    r = train::evaluate(train::generator_model(*state.generator), source);
  } else if (o.model == "identity") {
    r = train::evaluate([](const Tensor& x) { return x; }, source);
  } else if (o.model == "oracle") {
    r = train::evaluate_pairs(
        [&index](const data::ImagePair& p) {
          const auto it = index.meta.isp_params.find(p.id);
          if (it == index.meta.isp_params.end()) throw IoError("no ISP parameters recorded for pair '" + p.id + "'");
          return isp::inverse_isp(p.srgb, it->second).raw;
        },
        source);
  } else {
    throw UsageError("--model must be checkpoint, identity or oracle");
  }
  out << "psnr=" << fixed(r.mean_psnr) << " ssim=" << fixed(r.mean_ssim) << " count=" << r.count << '\n';
  return kExitOk;
}

int run_infer(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require(o.input, "--input");
  require(o.output, "--output");
  const fs::path input = o.input;
  const fs::path dir = o.output;
  const fs::path raw_path = dir / (input.stem().string() + ".pgm");
  const fs::path preview_path = dir / (input.stem().string() + "_preview.png");
  write_manifest(dir, "infer", args, json{{"checkpoint", o.checkpoint}}, o.seed,
                 {{"raw", raw_path.string()}, {"preview", preview_path.string()}});
  const train::TrainState state = load_model(o.checkpoint);
  const Tensor raw = state.generator->infer(data::read_srgb(input));
  data::write_raw(raw_path, raw);
  data::save_raw_visualization(raw, preview_path);
  out << "raw=" << raw_path.string() << " preview=" << preview_path.string() << '\n';
  return kExitOk;
}

int run_synth(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require(o.out, "--out");
  if (o.count < 1) throw UsageError("--count must be >= 1");
  if (o.size < 32 || o.size % 32 != 0) throw UsageError("--size must be a positive multiple of 32");
  const std::uint64_t seed = o.seed.value_or(0);
  const fs::path split = fs::path(o.out) / data::track_name(data::Track::Synth) / "train";
  write_manifest(o.out, "synth", args, json{{"count", o.count}, {"size", o.size}}, seed, {{"split", split.string()}});
  data::SplitMeta meta;
  meta.track = data::Track::Synth;
  meta.height = meta.width = o.size;
  for (std::int64_t i = 0; i < o.count; ++i) {
    std::ostringstream id;
    id << std::setw(6) << std::setfill('0') << i;
    const isp::SyntheticPair pair = isp::make_synthetic_pair(derive_seed(seed, static_cast<std::uint64_t>(i)), o.size);
    data::write_pair(split, id.str(), pair.srgb, pair.raw);
    meta.isp_params.emplace(id.str(), pair.params);
  }
  data::write_split_meta(split, meta);
  out << "pairs=" << o.count << " split=" << split.string() << '\n';
  return kExitOk;
}

int run_viz(const Options& o, std::ostream& out) {
  require(o.input, "--input");
  require(o.output, "--output");
  data::save_raw_visualization(data::read_raw(o.input, o.channels), o.output);
  out << "preview=" << o.output << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rstisp: sRGB to RAW reconstruction with style-conditioned U-Net"};
  app.name("rstisp");
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON training config");
    sub->add_option("--data-dir", o.data_dir, std::string("Dataset root (default $") + kDataRootEnv + ")");
    sub->add_option("--track", o.track, "s7, p20 or synth")->check(CLI::IsMember({"s7", "p20", "synth"}));
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    sub->add_flag("--deterministic", o.deterministic, "Disable background prefetch");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train the generator and critic");
  common(train_cmd);
  train_cmd->add_option("--split", o.split, "Dataset split");
  train_cmd->add_option("--set", o.sets, "Config override key=value (repeatable)");
  train_cmd->add_option("--epochs", o.epochs);
  train_cmd->add_option("--max-steps", o.max_steps);
  train_cmd->add_option("--batch-size", o.batch_size);
  train_cmd->add_option("--lr-g", o.lr_g);
  train_cmd->add_option("--lr-d", o.lr_d);
  train_cmd->add_option("--width-multiplier", o.width_multiplier);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Mean PSNR/SSIM of a model on a dataset split");
  common(eval_cmd);
  eval_cmd->add_option("--split", o.split, "Dataset split");
  eval_cmd->add_option("--model", o.model, "checkpoint, identity or oracle");

  CLI::App* infer_cmd = app.add_subcommand("infer", "Reconstruct RAW from one sRGB image");
  common(infer_cmd);
  infer_cmd->add_option("--input", o.input, "sRGB image (PNG or PPM)");
  infer_cmd->add_option("--output", o.output, "Output directory");

  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate synthetic sRGB/RAW pairs");
  common(synth_cmd);
  synth_cmd->add_option("--count", o.count, "Number of pairs");
  synth_cmd->add_option("--size", o.size, "Square side, multiple of 32");

  CLI::App* viz_cmd = app.add_subcommand("viz", "Write an 8-bit preview of a RAW file");
  common(viz_cmd);
  viz_cmd->add_option("--input", o.input, "16-bit planar PGM");
  viz_cmd->add_option("--output", o.output, "Preview PNG path");
  viz_cmd->add_option("--channels", o.channels, "Planes in the PGM");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    return fail(err, "usage", e.what(), kExitUsage);
  }

  try {
    if (train_cmd->parsed()) return run_train(o, args, out);
    if (eval_cmd->parsed()) return run_eval(o, args, out);
    if (infer_cmd->parsed()) return run_infer(o, args, out);
    if (synth_cmd->parsed()) return run_synth(o, args, out);
    if (viz_cmd->parsed()) return run_viz(o, out);
  } catch (const UsageError& e) {
    return fail(err, "usage", e.what(), kExitUsage);
  } catch (const ContractError& e) {
    return fail(err, "invalid_argument", e.what(), kExitUsage);
  } catch (const IoError& e) {
    return fail(err, "io", e.what(), kExitRuntime);
  } catch (const NumericError& e) {
    return fail(err, "numeric", e.what(), kExitRuntime);
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what(), kExitRuntime);
  }
  return fail(err, "usage", "no subcommand", kExitUsage);
}

}  // namespace rstisp::cli
