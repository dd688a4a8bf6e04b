// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable kernels. Each op validates operand shapes and rejects
// non-finite inputs; results are recorded on the tape when any input
// requires gradients and grad mode is on.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rdit/tensor.hpp"

namespace rdit::ops {

inline constexpr double kNormEps = 1e-6;

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[T,in] * w[in,out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Broadcast a vector over the last axis.
Tensor add_rows(const Tensor& x, const Tensor& row);
Tensor mul_rows(const Tensor& x, const Tensor& row);
// x * (1 + scale) + shift, with shift/scale broadcast over rows.
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale);

// tanh-approximated GELU.
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
// x / sqrt(mean(x^2) + 1e-6) along axis, times gain (optional, extent of axis).
Tensor rms_norm(const Tensor& x, int axis, const Tensor& gain = {});

// [H,W,C] -> [H/w, W/w, C] block means.
Tensor mean_pool2d(const Tensor& x, std::size_t window);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// out.flat[i] = x.flat[index[i]]; out has the given shape.
Tensor gather(const Tensor& x, std::span<const std::size_t> index, Shape shape);
// table[V,D], ids -> [n,D]
Tensor embed_lookup(const Tensor& table, std::span<const int> ids);

// Multi-head softmax(q k^T / sqrt(d_head)) v. q:[Tq,D] k,v:[Tk,D] -> [Tq,D].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);
// Rotary embedding over each head, pairing dimension i with i + d_head/2.
Tensor rope(const Tensor& x, std::size_t heads, std::span<const int> positions, double base = 10000.0);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// mean((a - b)^2)
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace rdit::ops
