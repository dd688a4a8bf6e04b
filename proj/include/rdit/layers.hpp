// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "rdit/checkpoint.hpp"
#include "rdit/ops.hpp"
#include "rdit/rng.hpp"

namespace rdit {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined

  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
};

// Registers name.w / name.b. init_gain scales N(0, 1/in); zero gives a zero
// initialized map.
Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, SeededRng& rng,
                   double init_gain = 1.0, bool bias = true, bool trainable = true);
Tensor make_gain(ParamStore& store, const std::string& name, std::size_t width, bool trainable = true);
Tensor random_normal(Shape shape, double stddev, SeededRng& rng);

// Pre-norm transformer layer: rotary self-attention followed by a gated
// GELU feed-forward network (down(gelu(gate(x)) * up(x))).
struct TransformerLayer {
  Tensor norm1;
  Linear qkv;
  Linear proj;
  Tensor norm2;
  Linear gate;
  Linear up;
  Linear down;
  std::size_t width = 0;
  std::size_t heads = 1;

  Tensor operator()(const Tensor& x, const std::vector<int>& positions) const;
};

TransformerLayer make_transformer_layer(ParamStore& store, const std::string& name, std::size_t width,
                                        std::size_t heads, std::size_t ffn_hidden, SeededRng& rng);

std::vector<int> iota_positions(std::size_t n);

}  // namespace rdit
