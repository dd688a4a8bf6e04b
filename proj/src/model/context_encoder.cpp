// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/context_encoder.hpp"

#include <cmath>

#include "rdit/error.hpp"

namespace rdit {

void ContextConfig::validate(int patch_grid) const {
  if (vision_dim <= 0) fail(ErrorKind::kConfig, "vision_dim must be positive");
  if (pool_window <= 0 || patch_grid % pool_window != 0) {
    fail(ErrorKind::kConfig, "pool window " + std::to_string(pool_window) + " must divide the " +
                                 std::to_string(patch_grid) + "x" + std::to_string(patch_grid) + " feature map");
  }
  if (depth < 1) fail(ErrorKind::kConfig, "context transformer depth must be at least 1");
  if (max_context < 1) fail(ErrorKind::kConfig, "max_context must be at least 1");
  if (heads < 1) fail(ErrorKind::kConfig, "context heads must be positive");
}

void to_json(nlohmann::json& j, const ContextConfig& c) {
  j = {{"vision_dim", c.vision_dim},   {"pool_window", c.pool_window}, {"depth", c.depth},
       {"heads", c.heads},             {"max_context", c.max_context}, {"frozen_seed", c.frozen_seed},
       {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ContextConfig& c) {
  c.vision_dim = j.at("vision_dim");
  c.pool_window = j.at("pool_window");
  c.depth = j.at("depth");
  c.heads = j.at("heads");
  c.max_context = j.at("max_context");
  c.frozen_seed = j.at("frozen_seed");
  c.init_seed = j.at("init_seed");
}

ContextEncoder::ContextEncoder(const ContextConfig& config, const DiT& dit, ParamStore& store)
    : config_(config), patch_(dit.config().patch), grid_(dit.config().image_size / dit.config().patch) {
  config_.validate(grid_);
  const auto cw = static_cast<std::size_t>(dit.config().cond_width);
  if (cw % static_cast<std::size_t>(config_.heads) != 0 || (cw / static_cast<std::size_t>(config_.heads)) % 2 != 0) {
    fail(ErrorKind::kConfig, "context heads must split the conditioning width into even-width heads");
  }
  const auto vd = static_cast<std::size_t>(config_.vision_dim);
  const auto pd = static_cast<std::size_t>(dit.config().patch_dim());
  table_ = dit.token_table();

  SeededRng frozen_rng(config_.frozen_seed, 3);
  frozen_ = store.add("ctx.frozen.patch", random_normal({pd, vd}, 1.0 / std::sqrt(static_cast<double>(pd)), frozen_rng),
                      false);

  SeededRng rng(config_.init_seed, 5);
  proj_in_ = make_linear(store, "ctx.proj.in", vd, cw, rng);
  proj_out_ = make_linear(store, "ctx.proj.out", cw, cw, rng);
  proj_norm_ = make_gain(store, "ctx.proj.norm", cw);
  for (int i = 0; i < config_.depth; ++i) {
    layers_.push_back(make_transformer_layer(store, "ctx.tf.layer" + std::to_string(i), cw,
                                             static_cast<std::size_t>(config_.heads), 2 * cw, rng));
  }
  final_norm_ = make_gain(store, "ctx.tf.norm", cw);
  patch_index_ = patchify_index(dit.config().image_size, patch_, dit.config().channels);
}

std::size_t ContextEncoder::image_tokens() const {
  const auto g = static_cast<std::size_t>(grid_ / config_.pool_window);
  return g * g;
}

Tensor ContextEncoder::frozen_features(const Image& image) const {
  const Tensor x = image_to_tensor(image);
  const auto tokens = static_cast<std::size_t>(grid_ * grid_);
  const Tensor patches = ops::gather(x, patch_index_, {tokens, patch_index_.size() / tokens});
  const Tensor features = ops::matmul(patches, frozen_);
  const auto g = static_cast<std::size_t>(grid_);
  return ops::reshape(features, {g, g, static_cast<std::size_t>(config_.vision_dim)});
}

Tensor ContextEncoder::encode_image(const Image& image) const {
  const Tensor pooled = ops::mean_pool2d(frozen_features(image), static_cast<std::size_t>(config_.pool_window));
  const Tensor flat = ops::reshape(pooled, {image_tokens(), static_cast<std::size_t>(config_.vision_dim)});
  return ops::rms_norm(proj_out_(ops::gelu(proj_in_(flat))), -1, proj_norm_);
}

Tensor ContextEncoder::encode_feedback(const TokenSeq& tokens) const {
  const auto ids = tokens.active();
  if (ids.empty()) fail(ErrorKind::kShape, "encode_feedback: empty token sequence");
  return ops::embed_lookup(table_, ids);
}

Tensor ContextEncoder::embed_sequence(std::span<const ContextItem> items) const {
  if (items.empty()) return {};
  std::vector<Tensor> parts;
  parts.reserve(2 * items.size());
  for (const auto& item : items) {
    parts.push_back(encode_image(item.image));
    parts.push_back(encode_feedback(item.feedback));
  }
  return ops::concat(parts, 0);
}

Tensor ContextEncoder::transform(const Tensor& m) const {
  if (!m.defined()) return {};
  Tensor x = m;
  const auto positions = iota_positions(m.dim(0));
  for (const auto& layer : layers_) x = layer(x, positions);
  return ops::rms_norm(x, -1, final_norm_);
}

Tensor ContextEncoder::context_transform(std::span<const ContextItem> items) const {
  if (items.size() > static_cast<std::size_t>(config_.max_context)) {
    fail(ErrorKind::kShape, "context of " + std::to_string(items.size()) + " items exceeds capacity " +
                                std::to_string(config_.max_context));
  }
  return transform(embed_sequence(items));
}

std::size_t ContextEncoder::sequence_length(std::span<const ContextItem> items) const {
  std::size_t n = 0;
  for (const auto& item : items) n += image_tokens() + item.feedback.length;
  return n;
}

}  // namespace rdit
