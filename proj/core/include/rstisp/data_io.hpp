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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rstisp/isp_sim.hpp"
#include "rstisp/tensor.hpp"

namespace rstisp::data {

enum class Track { S7, P20, Synth };

std::string track_name(Track track);
/// Accepts "s7", "p20", "synth" (case-insensitive).
Track parse_track(const std::string& name);
/// Fixed input side of the s7 and p20 tracks; synthetic splits carry their own.
std::optional<std::int64_t> track_side(Track track);

/// Per-split sidecar stored as meta.json next to the srgb/ and raw/ folders.
struct SplitMeta {
  Track track = Track::Synth;
  int bit_depth = 16;
  std::string channel_order = "RGB";
  int channels = 3;
  std::string raw_layout = "pgm16-planar";
  std::int64_t height = 0;
  std::int64_t width = 0;
  /// Ground-truth ISP parameters of synthetic pairs, keyed by id.
  std::map<std::string, isp::IspParams> isp_params;
};

void write_split_meta(const std::filesystem::path& split_dir, const SplitMeta& meta);
SplitMeta read_split_meta(const std::filesystem::path& split_dir);

struct PairEntry {
  std::string id;
  std::filesystem::path srgb_path;
  std::filesystem::path raw_path;
};

/// Pairs of one split, sorted by id (byte-wise string order).
struct DatasetIndex {
  Track track = Track::Synth;
  std::filesystem::path split_dir;
  SplitMeta meta;
  std::vector<PairEntry> pairs;

  /// Indexes `<root>/<track>/<split>/{srgb,raw}`. Every sRGB image needs a RAW
  /// partner with the same id.
  static DatasetIndex open(const std::filesystem::path& root, Track track, const std::string& split = "train");

  std::size_t size() const { return pairs.size(); }
  /// Expected H x W for this split (track side, or the sidecar for synthetic data).
  std::pair<std::int64_t, std::int64_t> expected_dims() const;
};

struct ImagePair {
  std::string id;
  Tensor srgb;  // 1 x 3 x H x W in [0, 1]
  Tensor raw;   // 1 x 3 x H x W in [0, 1]
};

/// Decodes without any resizing or augmentation. Throws IoError naming the
/// file and the expected dims when a decoded image disagrees with the split.
ImagePair load_pair(const DatasetIndex& index, std::size_t i);
std::vector<ImagePair> load_all(const DatasetIndex& index);

/// sRGB: 8-bit PNG (or binary PPM). RAW: 16-bit planar PGM.
Tensor read_srgb(const std::filesystem::path& path);
void write_srgb(const std::filesystem::path& path, const Tensor& srgb);
Tensor read_raw(const std::filesystem::path& path, int channels = 3);
void write_raw(const std::filesystem::path& path, const Tensor& raw);

/// Writes `<split_dir>/srgb/<id>.png` and `<split_dir>/raw/<id>.pgm`.
void write_pair(const std::filesystem::path& split_dir, const std::string& id, const Tensor& srgb, const Tensor& raw);

/// RGGB mosaic B x 1 x H x W -> B x 4 x H/2 x W/2 with channels (R, G, G, B).
Tensor pack_bayer(const Tensor& mosaic);
Tensor unpack_bayer(const Tensor& packed);

/// 8-bit preview: round(255 * raw^(1/2.2)). Single image, 1 or 3 channels.
void save_raw_visualization(const Tensor& raw, const std::filesystem::path& path);

}  // namespace rstisp::data
