// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/layers.hpp"

#include <cmath>

namespace rdit {

Tensor random_normal(Shape shape, double stddev, SeededRng& rng) {
  std::vector<real> v(shape_numel(shape));
  for (real& x : v) x = static_cast<real>(rng.normal() * stddev);
  return Tensor::from(std::move(shape), std::move(v));
}

Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, SeededRng& rng,
                   double init_gain, bool bias, bool trainable) {
  Linear l;
  Tensor w = init_gain == 0.0 ? Tensor::zeros({in, out})
                              : random_normal({in, out}, init_gain / std::sqrt(static_cast<double>(in)), rng);
  l.weight = store.add(name + ".w", std::move(w), trainable);
  if (bias) l.bias = store.add(name + ".b", Tensor::zeros({out}), trainable);
  return l;
}

Tensor make_gain(ParamStore& store, const std::string& name, std::size_t width, bool trainable) {
  return store.add(name, Tensor::full({width}, real(1)), trainable);
}

std::vector<int> iota_positions(std::size_t n) {
  std::vector<int> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(i);
  return p;
}

TransformerLayer make_transformer_layer(ParamStore& store, const std::string& name, std::size_t width,
                                        std::size_t heads, std::size_t ffn_hidden, SeededRng& rng) {
  TransformerLayer t;
  t.width = width;
  t.heads = heads;
  t.norm1 = make_gain(store, name + ".norm1", width);
  t.qkv = make_linear(store, name + ".qkv", width, 3 * width, rng);
  t.proj = make_linear(store, name + ".proj", width, width, rng, 0.5);
  t.norm2 = make_gain(store, name + ".norm2", width);
  t.gate = make_linear(store, name + ".gate", width, ffn_hidden, rng);
  t.up = make_linear(store, name + ".up", width, ffn_hidden, rng);
  t.down = make_linear(store, name + ".down", ffn_hidden, width, rng, 0.5);
  return t;
}

Tensor TransformerLayer::operator()(const Tensor& x, const std::vector<int>& positions) const {
  const Tensor h = ops::rms_norm(x, -1, norm1);
  const Tensor qkv_out = qkv(h);
  const Tensor q = ops::rope(ops::slice(qkv_out, 1, 0, width), heads, positions);
  const Tensor k = ops::rope(ops::slice(qkv_out, 1, width, 2 * width), heads, positions);
  const Tensor v = ops::slice(qkv_out, 1, 2 * width, 3 * width);
  const Tensor attended = ops::add(x, proj(ops::scaled_dot_attention(q, k, v, heads)));
  const Tensor h2 = ops::rms_norm(attended, -1, norm2);
  return ops::add(attended, down(ops::mul(ops::gelu(gate(h2)), up(h2))));
}

}  // namespace rdit
