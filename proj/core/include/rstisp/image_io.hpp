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
#include <vector>

#include "rstisp/tensor.hpp"

namespace rstisp::io {

/// Interleaved 8-bit pixels.
struct Image8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Channel planes of 16-bit samples, stored as one binary PGM whose planes are
/// stacked vertically (image height = planes * height).
struct Planes16 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int planes = 0;
  std::vector<std::uint16_t> values;  // plane-major
};

Planes16 read_pgm16(const std::filesystem::path& path, int planes);
void write_pgm16(const std::filesystem::path& path, const Planes16& image);

/// 8-bit code v maps to v / 255.
Tensor image8_to_tensor(const Image8& image);
/// Rounds clamp(x, 0, 1) * 255; expects 1 x C x H x W.
Image8 tensor_to_image8(const Tensor& t);

/// 16-bit code v maps to v / 65535.
Tensor planes16_to_tensor(const Planes16& image);
Planes16 tensor_to_planes16(const Tensor& t);

}  // namespace rstisp::io
