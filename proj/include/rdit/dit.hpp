// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Diffusion transformer over 4x4 pixel patches with adaptive-norm timestep
// modulation, self-attention over image tokens, cross-attention into the
// conditioning sequence and a feed-forward network per block.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "json.hpp"
#include "rdit/checkpoint.hpp"
#include "rdit/image.hpp"
#include "rdit/layers.hpp"
#include "rdit/world.hpp"

namespace rdit {

struct DiTConfig {
  int image_size = 32;
  int patch = 4;
  int channels = 3;
  int width = 128;
  int heads = 4;
  int depth = 6;
  int ffn_mult = 4;
  int prompt_depth = 1;
  int cond_width = 128;
  int vocab_size = 0;  // 0 means the shape-world vocabulary
  std::uint64_t init_seed = 7;

  void validate() const;
  int tokens() const { return (image_size / patch) * (image_size / patch); }
  int patch_dim() const { return patch * patch * channels; }
  bool operator==(const DiTConfig&) const = default;
};

void to_json(nlohmann::json& j, const DiTConfig& c);
void from_json(const nlohmann::json& j, DiTConfig& c);

// Prompt embeddings followed by the optional reflection sequence M'.
struct ConditioningBundle {
  Tensor sequence;                // [prompt_length + context_length, cond_width]
  std::size_t prompt_length = 0;  // boundary index
  std::size_t context_length = 0;
  bool is_null = false;           // empty-conditioning branch for guidance
};

// Bundle [prompt_emb ; context]; context may be undefined (empty M').
ConditioningBundle build_conditioning(const Tensor& prompt_emb, const Tensor& context);

// Patch index maps; patchify gathers [H,W,C] into [tokens, patch_dim].
std::vector<std::size_t> patchify_index(int image_size, int patch, int channels);
std::vector<std::size_t> unpatchify_index(int image_size, int patch, int channels);
Tensor patchify(const Tensor& image, int patch);
Tensor unpatchify(const Tensor& tokens, int image_size, int patch);

// Image in [0,1] <-> model space [-1,1] as a [H,W,C] tensor.
Tensor image_to_tensor(const Image& image);
// Maps [-1, 1] to [0, 1], clamped and quantized to 8-bit levels.
Image tensor_to_image(const Tensor& x);

struct CrossKV {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
};

class DiT {
 public:
  DiT(const DiTConfig& config, ParamStore& store);

  const DiTConfig& config() const { return config_; }

  // Shared token table used by the prompt encoder and the feedback encoder.
  const Tensor& token_table() const { return table_; }
  // Prompt token ids (BOS..EOS, no PAD) -> [n, cond_width]. With
  // frozen_table the lookup reads a detached copy of the table.
  Tensor encode_prompt(const std::vector<int>& ids, bool frozen_table = false) const;
  ConditioningBundle null_conditioning() const;

  // Per-block cross-attention keys/values of a conditioning sequence.
  CrossKV project_conditioning(const ConditioningBundle& cond) const;

  // Velocity prediction for x_t ([H,W,C] in model space) at time t.
  Tensor forward(const Tensor& x_t, double t, const ConditioningBundle& cond) const;
  Tensor forward(const Tensor& x_t, double t, const CrossKV& kv) const;

 private:
  struct Block {
    Linear ada;  // -> 6 * width: shift1, scale1, gate1, shift2, scale2, gate2
    Linear qkv;
    Linear attn_out;
    Tensor cross_norm;
    Linear cross_q;
    Linear cross_kv;
    Linear cross_out;
    Linear ffn_in;
    Linear ffn_out;
  };

  DiTConfig config_;
  Tensor table_;
  std::vector<TransformerLayer> prompt_layers_;
  Tensor prompt_norm_;
  Tensor null_cond_;
  Linear patch_embed_;
  Tensor pos_embed_;
  Linear time_in_;
  Linear time_out_;
  std::vector<Block> blocks_;
  Linear final_ada_;
  Linear final_out_;
  std::vector<std::size_t> patch_index_;
  std::vector<std::size_t> unpatch_index_;
};

Tensor timestep_embedding(double t, std::size_t width);

}  // namespace rdit
