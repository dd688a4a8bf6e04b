// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <optional>

#include "rdit/world.hpp"

namespace rdit {

namespace {

inline constexpr int kMinArea = 8;
inline constexpr int kBackground = -1;

// Palette index of the nearest color, or kBackground.
int quantize(const Image& img, int y, int x) {
  const float r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
  float best = r * r + g * g + b * b;  // distance to the black background
  int label = kBackground;
  for (Color c : kAllColors) {
    const auto p = palette_rgb(c);
    const float d = (r - p[0]) * (r - p[0]) + (g - p[1]) * (g - p[1]) + (b - p[2]) * (b - p[2]);
    if (d < best) {
      best = d;
      label = static_cast<int>(c);
    }
  }
  return label;
}

std::optional<ShapeKind> classify(double fill) {
  if (fill >= 0.95) return ShapeKind::kSquare;
  if (fill >= 0.70 && fill <= 0.85) return ShapeKind::kCircle;
  if (fill >= 0.40 && fill <= 0.60) return ShapeKind::kTriangle;
  if (fill >= 0.15 && fill < 0.40) return ShapeKind::kCross;
  return std::nullopt;
}

struct Component {
  SceneObject object;
  int area = 0;
};

}  // namespace

SceneGraph detect(const Image& image) {
  std::array<int, kImageSize * kImageSize> labels{};
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) labels[static_cast<std::size_t>(y * kImageSize + x)] = quantize(image, y, x);

  std::array<bool, kImageSize * kImageSize> seen{};
  std::array<std::optional<Component>, kGrid * kGrid> by_cell{};
  std::vector<int> stack;
  for (int start = 0; start < kImageSize * kImageSize; ++start) {
    const int label = labels[static_cast<std::size_t>(start)];
    if (label == kBackground || seen[static_cast<std::size_t>(start)]) continue;
    int area = 0, min_x = kImageSize, max_x = -1, min_y = kImageSize, max_y = -1;
    long sum_x = 0, sum_y = 0;
    stack.assign(1, start);
    seen[static_cast<std::size_t>(start)] = true;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / kImageSize, x = p % kImageSize;
      ++area;
      sum_x += x;
      sum_y += y;
      min_x = std::min(min_x, x), max_x = std::max(max_x, x);
      min_y = std::min(min_y, y), max_y = std::max(max_y, y);
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= kImageSize || n[1] < 0 || n[1] >= kImageSize) continue;
        const int q = n[0] * kImageSize + n[1];
        if (seen[static_cast<std::size_t>(q)] || labels[static_cast<std::size_t>(q)] != label) continue;
        seen[static_cast<std::size_t>(q)] = true;
        stack.push_back(q);
      }
    }
    if (area < kMinArea) continue;
    const double fill = static_cast<double>(area) / ((max_x - min_x + 1) * (max_y - min_y + 1));
    const auto shape = classify(fill);
    if (!shape) continue;
    const int col = std::clamp(static_cast<int>(static_cast<double>(sum_x) / area) / kCellSize, 0, kGrid - 1);
    const int row = std::clamp(static_cast<int>(static_cast<double>(sum_y) / area) / kCellSize, 0, kGrid - 1);
    auto& slot = by_cell[static_cast<std::size_t>(row * kGrid + col)];
    if (!slot || slot->area < area) slot = Component{{*shape, static_cast<Color>(label), row, col}, area};
  }
  SceneGraph scene;
  for (const auto& slot : by_cell) {
    if (slot) scene.objects.push_back(slot->object);
  }
  return scene;
}

}  // namespace rdit
