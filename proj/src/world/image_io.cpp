// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "rdit/error.hpp"
#include "rdit/world.hpp"

namespace rdit {

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path);
  os << "P6\n" << kImageSize << ' ' << kImageSize << "\n255\n";
  std::string bytes(image.pixels.size(), '\0');
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorKind::kIo, "short write on " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w != kImageSize || h != kImageSize || maxval != 255) {
    fail(ErrorKind::kFormat, path + ": expected a 32x32 8-bit P6 image");
  }
  is.get();
  Image img;
  std::string bytes(img.pixels.size(), '\0');
  is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) fail(ErrorKind::kFormat, path + ": truncated pixels");
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / 255.0f;
  }
  return img;
}

}  // namespace rdit
