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
#include <string>
#include <utility>
#include <vector>

#include "rstisp/tensor.hpp"

namespace rstisp {

/// Container written as `ckpt_<step>.bin`:
///
///   bytes 0..7   magic "RSTISPCK"
///   bytes 8..11  format version (uint32, little endian)
///   bytes 12..19 header length N (uint64, little endian)
///   N bytes      JSON header: version, step, config, rng, counters and a
///                tensor directory of {name, shape, offset} entries
///   payload      float64 little-endian values, in directory order
///
/// Tensor names are hierarchical, e.g. "generator/enc1.conv1.weight".
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::int64_t step = 0;
  std::string config_json = "{}";
  std::string rng_state;
  std::map<std::string, std::int64_t> counters;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

std::string checkpoint_filename(std::int64_t step);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rstisp
