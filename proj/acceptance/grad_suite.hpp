// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Gradient-check cases shared by the float64 tests and the probe tool.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rdit/context_encoder.hpp"
#include "rdit/dit.hpp"
#include "rdit/gradcheck.hpp"
#include "rdit/ops.hpp"

namespace rdit::gradsuite {

using Check = std::function<double(const std::function<Tensor()>&, const std::vector<Tensor>&, const char*, double)>;

constexpr double kTol = 1e-4;
constexpr double kStep = 1e-5;
constexpr double kDitStep = 1e-4;

inline Tensor randn(Shape shape, SeededRng& rng, double scale = 1.0) {
  std::vector<real> v(shape_numel(shape));
  for (real& x : v) x = rng.normal() * scale;
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Weighted sum so that every output coordinate carries a distinct gradient.
inline Tensor projection_weights(const Shape& shape, std::uint64_t seed) {
  SeededRng rng(seed, 99);
  std::vector<real> w(shape_numel(shape));
  for (real& x : w) x = rng.normal();
  return Tensor::from(shape, std::move(w));
}

inline Tensor project(const Tensor& y, std::uint64_t seed) {
  return ops::sum(ops::mul(y, projection_weights(y.shape(), seed)));
}

inline void kernels(std::uint64_t seed, const Check& check) {
  SeededRng rng(seed);
  const double h = kStep;
  Tensor a = randn({3, 4}, rng), b = randn({4, 5}, rng), bias = randn({5}, rng);
  check([&] { return project(ops::matmul(a, b), seed); }, {a, b}, "matmul", h);
  check([&] { return project(ops::linear(a, b, bias), seed); }, {a, b, bias}, "linear", h);

  Tensor x = randn({3, 4}, rng), y = randn({3, 4}, rng);
  check([&] { return project(ops::add(x, y), seed); }, {x, y}, "add", h);
  check([&] { return project(ops::sub(x, y), seed); }, {x, y}, "sub", h);
  check([&] { return project(ops::mul(x, y), seed); }, {x, y}, "mul", h);
  check([&] { return project(ops::scale(x, -1.7), seed); }, {x}, "scale", h);
  check([&] { return project(ops::gelu(x), seed); }, {x}, "gelu", h);
  check([&] { return project(ops::softmax(x, 1), seed); }, {x}, "softmax1", h);
  check([&] { return project(ops::softmax(x, 0), seed); }, {x}, "softmax0", h);

  Tensor row = randn({4}, rng), row2 = randn({4}, rng);
  check([&] { return project(ops::add_rows(x, row), seed); }, {x, row}, "add_rows", h);
  check([&] { return project(ops::mul_rows(x, row), seed); }, {x, row}, "mul_rows", h);
  Tensor shift = randn({1, 4}, rng), sc = randn({1, 4}, rng);
  check([&] { return project(ops::modulate(x, shift, sc), seed); }, {x, shift, sc}, "modulate", h);
  check([&] { return project(ops::rms_norm(x, 1, row2), seed); }, {x, row2}, "rms_norm", h);
  check([&] { return project(ops::rms_norm(x, 0), seed); }, {x}, "rms_norm0", h);

  Tensor img = randn({4, 4, 3}, rng);
  check([&] { return project(ops::mean_pool2d(img, 2), seed); }, {img}, "mean_pool2d", h);
  const Tensor parts[] = {x, y};
  check([&] { return project(ops::concat(parts, 0), seed); }, {x, y}, "concat0", h);
  check([&] { return project(ops::concat(parts, 1), seed); }, {x, y}, "concat1", h);
  check([&] { return project(ops::slice(x, 1, 1, 3), seed); }, {x}, "slice", h);
  check([&] { return project(ops::transpose(x), seed); }, {x}, "transpose", h);
  check([&] { return project(ops::reshape(x, {2, 6}), seed); }, {x}, "reshape", h);
  const std::size_t idx[] = {3, 0, 0, 11, 7};
  check([&] { return project(ops::gather(x, idx, {5}), seed); }, {x}, "gather", h);

  Tensor table = randn({6, 4}, rng);
  const int ids[] = {5, 1, 1, 0};
  check([&] { return project(ops::embed_lookup(table, ids), seed); }, {table}, "embed_lookup", h);

  Tensor q = randn({3, 8}, rng), k = randn({5, 8}, rng), v = randn({5, 8}, rng);
  check([&] { return project(ops::scaled_dot_attention(q, k, v, 2), seed); }, {q, k, v}, "attention", h);
  const int pos[] = {0, 3, 4};
  check([&] { return project(ops::rope(q, 2, pos), seed); }, {q}, "rope", h);

  check([&] { return ops::mean(ops::mul(x, y)); }, {x, y}, "mean", h);
  check([&] { return ops::mse(x, y); }, {x, y}, "mse", h);
}

// Full DiT with a context encoder, every parameter a leaf.
inline double dit(std::uint64_t seed, const Check& check, std::size_t* coordinates = nullptr) {
  DiTConfig cfg;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.ffn_mult = 2;
  cfg.cond_width = 8;
  cfg.init_seed = seed;
  ParamStore store;
  DiT net(cfg, store);
  ContextConfig ccfg;
  ccfg.vision_dim = 4;
  ccfg.depth = 1;
  ccfg.heads = 2;
  ccfg.init_seed = seed + 100;
  ContextEncoder ctx(ccfg, net, store);

  // Zero-initialized maps would hide most of the graph; randomize them.
  SeededRng rng(seed, 7);
  for (auto& e : store.entries()) {
    for (real& x : e.tensor.data()) x = rng.normal() * 0.3;
  }
  const Tensor x_t = randn({32, 32, 3}, rng);
  const auto prompt = tokenize("a red circle").active();
  ContextItem item;
  item.image = render(random_scene(rng));
  item.feedback = tokenize("There is no red circle in the image.");
  const std::vector<ContextItem> items{item};

  const Tensor weights = ops::scale(projection_weights({32, 32, 3}, seed), 1.0 / (32 * 32 * 3));
  auto f = [&] {
    const Tensor m = ctx.context_transform(items);
    const auto cond = build_conditioning(net.encode_prompt(prompt), m);
    return ops::sum(ops::mul(net.forward(x_t, 0.37, cond), weights));
  };
  const auto leaves = store.trainable();
  if (coordinates) {
    *coordinates = 0;
    for (const auto& l : leaves) *coordinates += l.numel();
  }
  return check(f, leaves, "dit", kDitStep);
}

}  // namespace rdit::gradsuite
