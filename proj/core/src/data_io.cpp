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

#include "rstisp/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "rstisp/errors.hpp"
#include "rstisp/image_io.hpp"

namespace rstisp::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string track_name(Track track) {
  switch (track) {
    case Track::S7: return "s7";
    case Track::P20: return "p20";
    case Track::Synth: return "synth";
  }
  return "synth";
}

Track parse_track(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "s7") return Track::S7;
  if (lower == "p20") return Track::P20;
  if (lower == "synth") return Track::Synth;
  throw ContractError("unknown track '" + name + "' (expected s7, p20 or synth)");
}

std::optional<std::int64_t> track_side(Track track) {
  switch (track) {
    case Track::S7: return 504;
    case Track::P20: return 496;
    case Track::Synth: return std::nullopt;
  }
  return std::nullopt;
}

namespace {

json params_to_json(const isp::IspParams& p) {
  return json{{"wb_gains", p.wb_gains}, {"color_matrix", p.color_matrix}, {"gamma", p.gamma},
              {"tone_knee", p.tone_knee}, {"seed", p.seed}};
}

isp::IspParams params_from_json(const json& j) {
  return isp::IspParams::create(j.at("wb_gains").get<std::array<double, 3>>(),
                                j.at("color_matrix").get<std::array<double, 9>>(), j.at("gamma").get<double>(),
                                j.at("tone_knee").get<double>(), j.value("seed", std::uint64_t{0}));
}

bool has_ext(const fs::path& p, std::initializer_list<const char*> exts) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* x) { return e == x; });
}

void check_single(const Tensor& t, const std::string& what) {
  expect_rank(t, 4, what);
  if (t.dim(0) != 1) throw ContractError(what + ": expected a single image, got batch " + std::to_string(t.dim(0)));
}

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string magic;
  std::int64_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw IoError("'" + path.string() + "' is not an 8-bit binary PPM");
  io::Image8 img{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h * 3))};
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw IoError("truncated PPM '" + path.string() + "'");
  return io::image8_to_tensor(img);
}

}  // namespace

void write_split_meta(const fs::path& split_dir, const SplitMeta& meta) {
  json j{{"track", track_name(meta.track)}, {"bit_depth", meta.bit_depth}, {"channel_order", meta.channel_order},
         {"channels", meta.channels}, {"raw_layout", meta.raw_layout}, {"height", meta.height},
         {"width", meta.width}};
  json params = json::object();
  for (const auto& [id, p] : meta.isp_params) params[id] = params_to_json(p);
  j["isp_params"] = params;
  std::ofstream out(split_dir / "meta.json", std::ios::trunc);
  if (!out) throw IoError("cannot write '" + (split_dir / "meta.json").string() + "'");
  out << j.dump(2) << '\n';
}

SplitMeta read_split_meta(const fs::path& split_dir) {
  const fs::path path = split_dir / "meta.json";
  std::ifstream in(path);
  if (!in) throw IoError("missing sidecar '" + path.string() + "'");
  SplitMeta meta;
  try {
    const json j = json::parse(in);
    meta.track = parse_track(j.at("track").get<std::string>());
    meta.bit_depth = j.value("bit_depth", 16);
    meta.channel_order = j.value("channel_order", std::string("RGB"));
    meta.channels = j.value("channels", 3);
    meta.raw_layout = j.value("raw_layout", std::string("pgm16-planar"));
    meta.height = j.value("height", std::int64_t{0});
    meta.width = j.value("width", std::int64_t{0});
    if (j.contains("isp_params")) {
      for (const auto& [id, p] : j.at("isp_params").items()) meta.isp_params.emplace(id, params_from_json(p));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed sidecar '" + path.string() + "': " + e.what());
  }
  if (meta.bit_depth != 16) throw IoError("sidecar '" + path.string() + "': only 16-bit RAW is supported");
  if (meta.channels != 3) throw IoError("sidecar '" + path.string() + "': only 3-channel RAW is supported");
  return meta;
}

DatasetIndex DatasetIndex::open(const fs::path& root, Track track, const std::string& split) {
  DatasetIndex index;
  index.track = track;
  index.split_dir = root / track_name(track) / split;
  const fs::path srgb_dir = index.split_dir / "srgb";
  const fs::path raw_dir = index.split_dir / "raw";
  if (!fs::is_directory(srgb_dir) || !fs::is_directory(raw_dir)) {
    throw IoError("dataset split '" + index.split_dir.string() + "' lacks srgb/ or raw/");
  }
  if (fs::exists(index.split_dir / "meta.json")) {
    index.meta = read_split_meta(index.split_dir);
    if (index.meta.track != track) {
      throw IoError("sidecar in '" + index.split_dir.string() + "' declares track " + track_name(index.meta.track));
    }
  } else if (track == Track::Synth) {
    throw IoError("synthetic split '" + index.split_dir.string() + "' needs meta.json");
  } else {
    index.meta.track = track;
  }
  for (const auto& entry : fs::directory_iterator(srgb_dir)) {
    if (!entry.is_regular_file() || !has_ext(entry.path(), {".png", ".ppm"})) continue;
    const std::string id = entry.path().stem().string();
    const fs::path raw = raw_dir / (id + ".pgm");
    if (!fs::is_regular_file(raw)) throw IoError("RAW partner '" + raw.string() + "' for id '" + id + "' is missing");
    index.pairs.push_back({id, entry.path(), raw});
  }
  std::sort(index.pairs.begin(), index.pairs.end(), [](const PairEntry& a, const PairEntry& b) { return a.id < b.id; });
  return index;
}

std::pair<std::int64_t, std::int64_t> DatasetIndex::expected_dims() const {
  if (const auto side = track_side(track)) return {*side, *side};
  return {meta.height, meta.width};
}

Tensor read_srgb(const fs::path& path) {
  if (has_ext(path, {".ppm"})) return read_ppm(path);
  return io::image8_to_tensor(io::read_png(path));
}

void write_srgb(const fs::path& path, const Tensor& srgb) {
  check_single(srgb, "write_srgb");
  io::write_png(path, io::tensor_to_image8(srgb));
}

Tensor read_raw(const fs::path& path, int channels) { return io::planes16_to_tensor(io::read_pgm16(path, channels)); }

void write_raw(const fs::path& path, const Tensor& raw) {
  check_single(raw, "write_raw");
  io::write_pgm16(path, io::tensor_to_planes16(raw));
}

ImagePair load_pair(const DatasetIndex& index, std::size_t i) {
  if (i >= index.pairs.size()) throw ContractError("load_pair: index " + std::to_string(i) + " out of range");
  const PairEntry& e = index.pairs[i];
  for (const auto& p : {e.srgb_path, e.raw_path}) {
    if (!fs::is_regular_file(p)) throw IoError("'" + p.string() + "' is missing");
  }
  ImagePair pair{e.id, read_srgb(e.srgb_path), read_raw(e.raw_path, 3)};
  const auto [eh, ew] = index.expected_dims();
  const auto check = [&](const Tensor& t, const fs::path& p) {
    if (t.dim(1) != 3 || t.dim(2) != eh || t.dim(3) != ew) {
      throw IoError("'" + p.string() + "' has dims " + std::to_string(t.dim(2)) + "x" + std::to_string(t.dim(3)) + "x" +
                    std::to_string(t.dim(1)) + ", expected " + std::to_string(eh) + "x" + std::to_string(ew) + "x3");
    }
  };
  check(pair.srgb, e.srgb_path);
  check(pair.raw, e.raw_path);
  return pair;
}

std::vector<ImagePair> load_all(const DatasetIndex& index) {
  std::vector<ImagePair> out;
  out.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out.push_back(load_pair(index, i));
  return out;
}

void write_pair(const fs::path& split_dir, const std::string& id, const Tensor& srgb, const Tensor& raw) {
  fs::create_directories(split_dir / "srgb");
  fs::create_directories(split_dir / "raw");
  write_srgb(split_dir / "srgb" / (id + ".png"), srgb);
  write_raw(split_dir / "raw" / (id + ".pgm"), raw);
}

Tensor pack_bayer(const Tensor& mosaic) {
  expect_rank(mosaic, 4, "pack_bayer");
  if (mosaic.dim(1) != 1) throw ContractError("pack_bayer: expected a single-channel mosaic");
  const auto B = mosaic.dim(0), H = mosaic.dim(2), W = mosaic.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ContractError("pack_bayer: dims " + std::to_string(H) + "x" + std::to_string(W) + " must be even");
  }
  Tensor out({B, 4, H / 2, W / 2});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t h = 0; h < H / 2; ++h)
      for (std::int64_t w = 0; w < W / 2; ++w) {
        out.at(b, 0, h, w) = mosaic.at(b, 0, 2 * h, 2 * w);
        out.at(b, 1, h, w) = mosaic.at(b, 0, 2 * h, 2 * w + 1);
        out.at(b, 2, h, w) = mosaic.at(b, 0, 2 * h + 1, 2 * w);
        out.at(b, 3, h, w) = mosaic.at(b, 0, 2 * h + 1, 2 * w + 1);
      }
  return out;
}

Tensor unpack_bayer(const Tensor& packed) {
  expect_rank(packed, 4, "unpack_bayer");
  if (packed.dim(1) != 4) throw ContractError("unpack_bayer: expected 4 channels, got " + std::to_string(packed.dim(1)));
  const auto B = packed.dim(0), H = packed.dim(2), W = packed.dim(3);
  Tensor out({B, 1, 2 * H, 2 * W});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w) {
        out.at(b, 0, 2 * h, 2 * w) = packed.at(b, 0, h, w);
        out.at(b, 0, 2 * h, 2 * w + 1) = packed.at(b, 1, h, w);
        out.at(b, 0, 2 * h + 1, 2 * w) = packed.at(b, 2, h, w);
        out.at(b, 0, 2 * h + 1, 2 * w + 1) = packed.at(b, 3, h, w);
      }
  return out;
}

void save_raw_visualization(const Tensor& raw, const fs::path& path) {
  check_single(raw, "save_raw_visualization");
  if (raw.dim(1) != 1 && raw.dim(1) != 3) throw ContractError("save_raw_visualization: 1 or 3 channels supported");
  Tensor preview = raw;
  for (auto& v : preview.values()) v = std::pow(std::clamp(v, 0.0, 1.0), 1.0 / 2.2);
  io::write_png(path, io::tensor_to_image8(preview));
}

}  // namespace rstisp::data
