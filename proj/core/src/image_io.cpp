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

#include "rstisp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rstisp/errors.hpp"

namespace rstisp::io {

namespace fs = std::filesystem;

Image8 read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 3;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return out;
}

void write_png(const fs::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractError("write_png: 1 or 3 channels supported");
  if (static_cast<std::int64_t>(image.pixels.size()) != image.width * image.height * image.channels) {
    throw ContractError("write_png: pixel buffer size mismatch");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& is) {
  std::string tok;
  char ch;
  while (is.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(is, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

Planes16 read_pgm16(const fs::path& path, int planes) {
  if (planes < 1) throw ContractError("read_pgm16: plane count must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  if (pnm_token(in) != "P5") throw IoError("'" + path.string() + "' is not a binary PGM");
  std::int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(pnm_token(in));
    h = std::stoll(pnm_token(in));
    maxval = std::stoll(pnm_token(in));
  } catch (const std::exception&) {
    throw IoError("malformed PGM header in '" + path.string() + "'");
  }
  if (maxval != 65535) throw IoError("'" + path.string() + "' is not a 16-bit PGM (maxval " + std::to_string(maxval) + ")");
  if (w <= 0 || h <= 0 || h % planes != 0) {
    throw IoError("'" + path.string() + "' height " + std::to_string(h) + " is not a multiple of " +
                  std::to_string(planes) + " planes");
  }
  Planes16 out{w, h / planes, planes, std::vector<std::uint16_t>(static_cast<std::size_t>(w * h))};
  std::vector<unsigned char> bytes(out.values.size() * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError("truncated PGM '" + path.string() + "'");
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return out;
}

void write_pgm16(const fs::path& path, const Planes16& image) {
  if (static_cast<std::int64_t>(image.values.size()) != image.width * image.height * image.planes) {
    throw ContractError("write_pgm16: buffer size mismatch");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << image.width << ' ' << image.height * image.planes << "\n65535\n";
  std::vector<unsigned char> bytes(image.values.size() * 2);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(image.values[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(image.values[i] & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Tensor image8_to_tensor(const Image8& image) {
  const std::int64_t C = image.channels, H = image.height, W = image.width;
  Tensor t({1, C, H, W});
  for (std::int64_t h = 0; h < H; ++h)
    for (std::int64_t w = 0; w < W; ++w)
      for (int c = 0; c < C; ++c) t.at(0, c, h, w) = image.pixels[static_cast<std::size_t>((h * W + w) * C + c)] / 255.0;
  return t;
}

Image8 tensor_to_image8(const Tensor& t) {
  expect_rank(t, 4, "tensor_to_image8");
  if (t.dim(0) != 1) throw ContractError("tensor_to_image8: expected a single image");
  Image8 img{t.dim(3), t.dim(2), static_cast<int>(t.dim(1)), {}};
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  for (std::int64_t h = 0; h < img.height; ++h)
    for (std::int64_t w = 0; w < img.width; ++w)
      for (int c = 0; c < img.channels; ++c) {
        const double v = std::clamp(t.at(0, c, h, w), 0.0, 1.0);
        img.pixels[static_cast<std::size_t>((h * img.width + w) * img.channels + c)] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

Tensor planes16_to_tensor(const Planes16& image) {
  Tensor t({1, image.planes, image.height, image.width});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = image.values[static_cast<std::size_t>(i)] / 65535.0;
  return t;
}

Planes16 tensor_to_planes16(const Tensor& t) {
  expect_rank(t, 4, "tensor_to_planes16");
  if (t.dim(0) != 1) throw ContractError("tensor_to_planes16: expected a single image");
  Planes16 p{t.dim(3), t.dim(2), static_cast<int>(t.dim(1)), std::vector<std::uint16_t>(static_cast<std::size_t>(t.size()))};
  for (std::int64_t i = 0; i < t.size(); ++i) {
    p.values[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::lround(std::clamp(t[i], 0.0, 1.0) * 65535.0));
  }
  return p;
}

}  // namespace rstisp::io
