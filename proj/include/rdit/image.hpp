// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace rdit {

inline constexpr int kImageSize = 32;
inline constexpr int kChannels = 3;

// 32x32 RGB, row-major HWC, values in [0, 1].
struct Image {
  std::vector<float> pixels = std::vector<float>(kImageSize * kImageSize * kChannels, 0.0f);

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * kImageSize + x) * kChannels + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * kImageSize + x) * kChannels + c]; }

  bool operator==(const Image&) const = default;
};

std::uint64_t image_hash(const Image& image);

}  // namespace rdit
