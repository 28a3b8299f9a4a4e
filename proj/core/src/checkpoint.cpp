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

#include "rstisp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>

#include "rstisp/errors.hpp"

namespace rstisp {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'S', 'T', 'I', 'S', 'P', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("truncated checkpoint '" + path + "'");
  return v;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor '" + name + "'");
}

std::string checkpoint_filename(std::int64_t step) { return "ckpt_" + std::to_string(step) + ".bin"; }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json dir = json::array();
  std::int64_t offset = 0;
  std::set<std::string> names;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!names.insert(name).second) throw ContractError("checkpoint: duplicate tensor '" + name + "'");
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  json header{{"version", ckpt.version}, {"step", ckpt.step},           {"rng", ckpt.rng_state},
              {"counters", ckpt.counters}, {"tensors", dir}};
  try {
    header["config"] = json::parse(ckpt.config_json);
  } catch (const json::exception& e) {
    throw ContractError(std::string("checkpoint: config is not valid JSON: ") + e.what());
  }
  const std::string text = header.dump();

  // Write to a sibling and rename so a crash never leaves a torn checkpoint.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + p + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError("'" + p + "' is not a checkpoint");
  Checkpoint ckpt;
  ckpt.version = get<std::uint32_t>(in, p);
  if (ckpt.version != Checkpoint::kVersion) {
    throw IoError("checkpoint '" + p + "' has version " + std::to_string(ckpt.version) + ", expected " +
                  std::to_string(Checkpoint::kVersion));
  }
  const auto len = get<std::uint64_t>(in, p);
  if (len > (std::uint64_t{1} << 32)) throw IoError("checkpoint '" + p + "' has an implausible header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint '" + p + "'");
  try {
    const json header = json::parse(text);
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.rng_state = header.at("rng").get<std::string>();
    ckpt.counters = header.at("counters").get<std::map<std::string, std::int64_t>>();
    ckpt.config_json = header.at("config").dump();
    for (const auto& entry : header.at("tensors")) {
      Tensor t(entry.at("shape").get<Shape>());
      in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in) throw IoError("truncated checkpoint '" + p + "'");
      ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in '" + p + "': " + e.what());
  }
  return ckpt;
}

}  // namespace rstisp
