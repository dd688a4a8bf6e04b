// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "rdit/image.hpp"
#include "rdit/rng.hpp"
#include "rdit/tensor.hpp"

namespace rdit {

enum class TimeMode {
  kSample,    // t ~ logit-normal, unit weight
  kWeighted,  // t ~ U(0,1), loss weighted by the logit-normal density
};

struct FlowSample {
  double t = 0.0;
  double weight = 1.0;
  Tensor x_w;
  Tensor eps;
  Tensor x_t;
  Tensor target;  // eps - x_w
};

// x_t = (1 - t) x_w + t eps, elementwise.
Tensor interpolate(const Tensor& x_w, const Tensor& eps, double t);
FlowSample draw_flow_sample(const Tensor& x_w, SeededRng& rng, TimeMode mode = TimeMode::kSample);

using VelocityFn = std::function<Tensor(const Tensor& x_t, double t)>;

Tensor flow_loss(const VelocityFn& model, const FlowSample& sample);
Tensor flow_loss(const VelocityFn& model, const Tensor& x_w, SeededRng& rng, TimeMode mode = TimeMode::kSample);

// Integrates from t=1 to t=0 on a uniform grid with guidance
// v = v_uncond + s (v_cond - v_uncond). Runs without recording.
Tensor euler_integrate(const Tensor& x1, const VelocityFn& cond, const VelocityFn& uncond, int steps, double guidance);
Image euler_sample(const VelocityFn& cond, const VelocityFn& uncond, int steps, double guidance, SeededRng& rng);

Tensor gaussian_like(const Shape& shape, SeededRng& rng);

}  // namespace rdit
