// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace rdit {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;

// FNV-1a, used for prompt, image, dataset and checkpoint identities.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = kFnvOffset);
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) { return fnv1a64(s.data(), s.size(), h); }
std::string hex64(std::uint64_t v);

}  // namespace rdit
