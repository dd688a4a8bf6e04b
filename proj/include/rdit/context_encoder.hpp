// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Reflection context encoder: past images pass through a frozen random patch
// projection, average pooling and a trained projector; feedback text uses the
// shared token table. The interleaved sequence [V1, E1, V2, E2, ...] is then
// refined by a small rotary transformer into M'.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "rdit/checkpoint.hpp"
#include "rdit/dit.hpp"
#include "rdit/layers.hpp"

namespace rdit {

struct ContextConfig {
  int vision_dim = 64;
  int pool_window = 2;  // 2 -> 4x4 grid (16 tokens), 4 -> 2x2 grid
  int depth = 2;
  int heads = 4;
  int max_context = 3;  // K the encoder is trained for
  std::uint64_t frozen_seed = 1234;
  std::uint64_t init_seed = 11;

  void validate(int patch_grid) const;
  bool operator==(const ContextConfig&) const = default;
};

void to_json(nlohmann::json& j, const ContextConfig& c);
void from_json(const nlohmann::json& j, ContextConfig& c);

struct ContextItem {
  Image image;
  TokenSeq feedback;
  int iteration = 0;
};

class ContextEncoder {
 public:
  ContextEncoder(const ContextConfig& config, const DiT& dit, ParamStore& store);

  const ContextConfig& config() const { return config_; }
  std::size_t image_tokens() const;

  // Output of the frozen projection, [grid, grid, vision_dim].
  Tensor frozen_features(const Image& image) const;
  Tensor encode_image(const Image& image) const;      // V: [image_tokens, cond_width]
  Tensor encode_feedback(const TokenSeq& tokens) const;  // E: [non-PAD tokens, cond_width]

  // M = Concat(V1, E1, ...); undefined for an empty context.
  Tensor embed_sequence(std::span<const ContextItem> items) const;
  Tensor transform(const Tensor& m) const;
  // M'; undefined for an empty context. Rejects more than max_context items.
  Tensor context_transform(std::span<const ContextItem> items) const;
  std::size_t sequence_length(std::span<const ContextItem> items) const;

 private:
  ContextConfig config_;
  int patch_;
  int grid_;
  Tensor table_;
  Tensor frozen_;
  Linear proj_in_;
  Linear proj_out_;
  Tensor proj_norm_;
  std::vector<TransformerLayer> layers_;
  Tensor final_norm_;
  std::vector<std::size_t> patch_index_;
};

}  // namespace rdit
