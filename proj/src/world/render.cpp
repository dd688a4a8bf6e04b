// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>

#include "rdit/hash.hpp"
#include "rdit/world.hpp"

namespace rdit {

namespace {

using Mask = std::array<std::array<bool, kGlyphSize>, kGlyphSize>;

Mask build_mask(ShapeKind shape) {
  Mask m{};
  const int c = kGlyphSize / 2;
  for (int y = 0; y < kGlyphSize; ++y) {
    for (int x = 0; x < kGlyphSize; ++x) {
      const int dx = x - c, dy = y - c;
      bool on = false;
      switch (shape) {
        case ShapeKind::kSquare: on = true; break;
        case ShapeKind::kCircle: on = 4 * (dx * dx + dy * dy) <= 49; break;
        case ShapeKind::kTriangle: on = (dx < 0 ? -dx : dx) <= y / 2; break;
        case ShapeKind::kCross: on = dx == 0 || dy == 0; break;
      }
      m[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = on;
    }
  }
  return m;
}

const Mask& glyph(ShapeKind shape) {
  static const std::array<Mask, 4> masks{build_mask(ShapeKind::kCircle), build_mask(ShapeKind::kSquare),
                                         build_mask(ShapeKind::kTriangle), build_mask(ShapeKind::kCross)};
  return masks[static_cast<std::size_t>(shape)];
}

}  // namespace

double glyph_fill_ratio(ShapeKind shape) {
  int on = 0;
  for (const auto& row : glyph(shape))
    for (bool b : row) on += b ? 1 : 0;
  return static_cast<double>(on) / (kGlyphSize * kGlyphSize);
}

Image render(const SceneGraph& scene) {
  Image img;
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x)
      for (int c = 0; c < kChannels; ++c) img.at(y, x, c) = scene.background[static_cast<std::size_t>(c)];
  for (const auto& o : scene.objects) {
    const auto rgb = palette_rgb(o.color);
    const Mask& m = glyph(o.shape);
    for (int y = 0; y < kGlyphSize; ++y) {
      for (int x = 0; x < kGlyphSize; ++x) {
        if (!m[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]) continue;
        for (int c = 0; c < kChannels; ++c) {
          img.at(o.row * kCellSize + y, o.col * kCellSize + x, c) = rgb[static_cast<std::size_t>(c)];
        }
      }
    }
  }
  return img;
}

std::uint64_t image_hash(const Image& image) {
  return fnv1a64(image.pixels.data(), image.pixels.size() * sizeof(float));
}

}  // namespace rdit
