// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/dit.hpp"

#include <algorithm>
#include <cmath>

#include "rdit/error.hpp"

namespace rdit {

void DiTConfig::validate() const {
  if (width <= 0 || heads <= 0 || width % heads != 0) {
    fail(ErrorKind::kConfig, "model width " + std::to_string(width) + " must be divisible by heads " + std::to_string(heads));
  }
  if ((width / heads) % 2 != 0) fail(ErrorKind::kConfig, "head width must be even");
  if (cond_width <= 0 || cond_width % heads != 0 || (cond_width / heads) % 2 != 0) {
    fail(ErrorKind::kConfig, "conditioning width must split into even-width heads");
  }
  if (patch <= 0 || image_size % patch != 0) fail(ErrorKind::kConfig, "patch size must divide the image size");
  if (image_size != kImageSize || channels != kChannels) fail(ErrorKind::kConfig, "model must match the 32x32x3 canvas");
  if (depth < 1 || prompt_depth < 0 || ffn_mult < 1) fail(ErrorKind::kConfig, "depth/ffn settings out of range");
}

void to_json(nlohmann::json& j, const DiTConfig& c) {
  j = {{"image_size", c.image_size}, {"patch", c.patch},         {"channels", c.channels},
       {"width", c.width},           {"heads", c.heads},         {"depth", c.depth},
       {"ffn_mult", c.ffn_mult},     {"prompt_depth", c.prompt_depth}, {"cond_width", c.cond_width},
       {"vocab_size", c.vocab_size}, {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, DiTConfig& c) {
  c.image_size = j.at("image_size");
  c.patch = j.at("patch");
  c.channels = j.at("channels");
  c.width = j.at("width");
  c.heads = j.at("heads");
  c.depth = j.at("depth");
  c.ffn_mult = j.at("ffn_mult");
  c.prompt_depth = j.at("prompt_depth");
  c.cond_width = j.at("cond_width");
  c.vocab_size = j.at("vocab_size");
  c.init_seed = j.at("init_seed");
}

ConditioningBundle build_conditioning(const Tensor& prompt_emb, const Tensor& context) {
  if (!prompt_emb.defined() || prompt_emb.rank() != 2) fail(ErrorKind::kShape, "prompt embeddings must be [n, width]");
  ConditioningBundle b;
  b.prompt_length = prompt_emb.dim(0);
  if (!context.defined()) {
    b.sequence = prompt_emb;
    return b;
  }
  if (context.rank() != 2 || context.dim(1) != prompt_emb.dim(1)) {
    fail(ErrorKind::kShape, "conditioning width mismatch: prompt " + shape_str(prompt_emb.shape()) + " vs context " +
                                shape_str(context.shape()));
  }
  const Tensor parts[] = {prompt_emb, context};
  b.sequence = ops::concat(parts, 0);
  b.context_length = context.dim(0);
  return b;
}

std::vector<std::size_t> patchify_index(int image_size, int patch, int channels) {
  const int grid = image_size / patch;
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(image_size * image_size * channels));
  for (int py = 0; py < grid; ++py)
    for (int px = 0; px < grid; ++px)
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int c = 0; c < channels; ++c) {
            idx.push_back(static_cast<std::size_t>(((py * patch + dy) * image_size + px * patch + dx) * channels + c));
          }
  return idx;
}

std::vector<std::size_t> unpatchify_index(int image_size, int patch, int channels) {
  const auto fwd = patchify_index(image_size, patch, channels);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return inv;
}

Tensor patchify(const Tensor& image, int patch) {
  if (image.rank() != 3 || image.dim(0) != image.dim(1) || image.dim(0) % static_cast<std::size_t>(patch) != 0) {
    fail(ErrorKind::kShape, "patchify: expected a square [H,W,C] image divisible by the patch, got " + shape_str(image.shape()));
  }
  const int size = static_cast<int>(image.dim(0)), channels = static_cast<int>(image.dim(2));
  const auto idx = patchify_index(size, patch, channels);
  const std::size_t grid = static_cast<std::size_t>(size / patch);
  return ops::gather(image, idx, {grid * grid, static_cast<std::size_t>(patch * patch * channels)});
}

Tensor unpatchify(const Tensor& tokens, int image_size, int patch) {
  const std::size_t grid = static_cast<std::size_t>(image_size / patch);
  if (tokens.rank() != 2 || tokens.dim(0) != grid * grid || tokens.dim(1) % static_cast<std::size_t>(patch * patch) != 0) {
    fail(ErrorKind::kShape, "unpatchify: unexpected token shape " + shape_str(tokens.shape()));
  }
  const int channels = static_cast<int>(tokens.dim(1)) / (patch * patch);
  const auto idx = unpatchify_index(image_size, patch, channels);
  return ops::gather(tokens, idx,
                     {static_cast<std::size_t>(image_size), static_cast<std::size_t>(image_size), static_cast<std::size_t>(channels)});
}

Tensor image_to_tensor(const Image& image) {
  std::vector<real> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<real>(2.0f * image.pixels[i] - 1.0f);
  return Tensor::from({kImageSize, kImageSize, kChannels}, std::move(v));
}

Image tensor_to_image(const Tensor& x) {
  if (x.numel() != static_cast<std::size_t>(kImageSize * kImageSize * kChannels)) {
    fail(ErrorKind::kShape, "tensor_to_image: unexpected shape " + shape_str(x.shape()));
  }
  Image img;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp((static_cast<double>(x.data()[i]) + 1.0) * 0.5, 0.0, 1.0);
    img.pixels[i] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
  }
  return img;
}

Tensor timestep_embedding(double t, std::size_t width) {
  const std::size_t half = width / 2;
  std::vector<real> v(width, real(0));
  const double scaled = t * 1000.0;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    v[i] = static_cast<real>(std::cos(scaled * freq));
    v[i + half] = static_cast<real>(std::sin(scaled * freq));
  }
  return Tensor::from({1, width}, std::move(v));
}

DiT::DiT(const DiTConfig& config, ParamStore& store) : config_(config) {
  if (config_.vocab_size == 0) config_.vocab_size = static_cast<int>(vocabulary_size());
  config_.validate();
  SeededRng rng(config_.init_seed, 1);
  const auto w = static_cast<std::size_t>(config_.width);
  const auto cw = static_cast<std::size_t>(config_.cond_width);
  const auto heads = static_cast<std::size_t>(config_.heads);

  table_ = store.add("text.embed", random_normal({static_cast<std::size_t>(config_.vocab_size), cw}, 1.0, rng));
  for (int i = 0; i < config_.prompt_depth; ++i) {
    prompt_layers_.push_back(
        make_transformer_layer(store, "prompt.layer" + std::to_string(i), cw, heads, 2 * cw, rng));
  }
  prompt_norm_ = make_gain(store, "prompt.norm", cw);
  null_cond_ = store.add("dit.null_cond", random_normal({1, cw}, 1.0, rng));

  patch_embed_ = make_linear(store, "dit.patch", static_cast<std::size_t>(config_.patch_dim()), w, rng);
  pos_embed_ = store.add("dit.pos", random_normal({static_cast<std::size_t>(config_.tokens()), w}, 0.5, rng));
  time_in_ = make_linear(store, "dit.time_in", w, w, rng);
  time_out_ = make_linear(store, "dit.time_out", w, w, rng);
  for (int b = 0; b < config_.depth; ++b) {
    const std::string p = "dit.block" + std::to_string(b);
    Block blk;
    blk.ada = make_linear(store, p + ".ada", w, 6 * w, rng, 0.0);
    blk.qkv = make_linear(store, p + ".qkv", w, 3 * w, rng);
    blk.attn_out = make_linear(store, p + ".attn_out", w, w, rng);
    blk.cross_norm = make_gain(store, p + ".cross_norm", w);
    blk.cross_q = make_linear(store, p + ".cross_q", w, w, rng);
    blk.cross_kv = make_linear(store, p + ".cross_kv", cw, 2 * w, rng);
    blk.cross_out = make_linear(store, p + ".cross_out", w, w, rng, 0.5);
    blk.ffn_in = make_linear(store, p + ".ffn_in", w, w * static_cast<std::size_t>(config_.ffn_mult), rng);
    blk.ffn_out = make_linear(store, p + ".ffn_out", w * static_cast<std::size_t>(config_.ffn_mult), w, rng);
    blocks_.push_back(std::move(blk));
  }
  final_ada_ = make_linear(store, "dit.final_ada", w, 2 * w, rng, 0.0);
  final_out_ = make_linear(store, "dit.final_out", w, static_cast<std::size_t>(config_.patch_dim()), rng, 0.0);
  patch_index_ = patchify_index(config_.image_size, config_.patch, config_.channels);
  unpatch_index_ = unpatchify_index(config_.image_size, config_.patch, config_.channels);
}

Tensor DiT::encode_prompt(const std::vector<int>& ids, bool frozen_table) const {
  if (ids.empty()) fail(ErrorKind::kShape, "encode_prompt: empty token sequence");
  Tensor x = ops::embed_lookup(frozen_table ? table_.detach() : table_, ids);
  const auto positions = iota_positions(ids.size());
  for (const auto& layer : prompt_layers_) x = layer(x, positions);
  return ops::rms_norm(x, -1, prompt_norm_);
}

ConditioningBundle DiT::null_conditioning() const {
  ConditioningBundle b;
  b.sequence = null_cond_;
  b.prompt_length = 1;
  b.is_null = true;
  return b;
}

CrossKV DiT::project_conditioning(const ConditioningBundle& cond) const {
  if (!cond.sequence.defined() || cond.sequence.rank() != 2 ||
      cond.sequence.dim(1) != static_cast<std::size_t>(config_.cond_width)) {
    fail(ErrorKind::kShape, "conditioning width mismatch: expected " + std::to_string(config_.cond_width) + ", got " +
                                (cond.sequence.defined() ? shape_str(cond.sequence.shape()) : std::string("none")));
  }
  const auto w = static_cast<std::size_t>(config_.width);
  CrossKV kv;
  for (const auto& blk : blocks_) {
    const Tensor both = blk.cross_kv(cond.sequence);
    kv.keys.push_back(ops::slice(both, 1, 0, w));
    kv.values.push_back(ops::slice(both, 1, w, 2 * w));
  }
  return kv;
}

Tensor DiT::forward(const Tensor& x_t, double t, const ConditioningBundle& cond) const {
  return forward(x_t, t, project_conditioning(cond));
}

Tensor DiT::forward(const Tensor& x_t, double t, const CrossKV& kv) const {
  const Shape image_shape{static_cast<std::size_t>(config_.image_size), static_cast<std::size_t>(config_.image_size),
                          static_cast<std::size_t>(config_.channels)};
  if (x_t.shape() != image_shape) {
    fail(ErrorKind::kShape, "dit forward: expected image " + shape_str(image_shape) + ", got " + shape_str(x_t.shape()));
  }
  if (kv.keys.size() != blocks_.size()) fail(ErrorKind::kShape, "dit forward: conditioning projected for another depth");
  const auto w = static_cast<std::size_t>(config_.width);
  const auto heads = static_cast<std::size_t>(config_.heads);
  const auto tokens = static_cast<std::size_t>(config_.tokens());

  Tensor x = ops::add(patch_embed_(ops::gather(x_t, patch_index_, {tokens, static_cast<std::size_t>(config_.patch_dim())})),
                      pos_embed_);
  const Tensor c = ops::gelu(time_out_(ops::gelu(time_in_(timestep_embedding(t, w)))));

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    const Tensor mod = blk.ada(c);
    auto part = [&](std::size_t i) { return ops::slice(mod, 1, i * w, (i + 1) * w); };

    Tensor h = ops::modulate(ops::rms_norm(x, -1), part(0), part(1));
    const Tensor qkv = blk.qkv(h);
    const Tensor attn = ops::scaled_dot_attention(ops::slice(qkv, 1, 0, w), ops::slice(qkv, 1, w, 2 * w),
                                                  ops::slice(qkv, 1, 2 * w, 3 * w), heads);
    x = ops::add(x, ops::mul_rows(blk.attn_out(attn), part(2)));

    h = ops::rms_norm(x, -1, blk.cross_norm);
    const Tensor cross = ops::scaled_dot_attention(blk.cross_q(h), kv.keys[b], kv.values[b], heads);
    x = ops::add(x, blk.cross_out(cross));

    h = ops::modulate(ops::rms_norm(x, -1), part(3), part(4));
    x = ops::add(x, ops::mul_rows(blk.ffn_out(ops::gelu(blk.ffn_in(h))), part(5)));
  }
  const Tensor fmod = final_ada_(c);
  const Tensor h = ops::modulate(ops::rms_norm(x, -1), ops::slice(fmod, 1, 0, w), ops::slice(fmod, 1, w, 2 * w));
  return ops::gather(final_out_(h), unpatch_index_, image_shape);
}

}  // namespace rdit
