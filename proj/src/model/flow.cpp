// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/flow.hpp"

#include <algorithm>

#include "rdit/dit.hpp"
#include "rdit/error.hpp"
#include "rdit/ops.hpp"

namespace rdit {

Tensor gaussian_like(const Shape& shape, SeededRng& rng) {
  std::vector<real> v(shape_numel(shape));
  for (real& x : v) x = static_cast<real>(rng.normal());
  return Tensor::from(shape, std::move(v));
}

Tensor interpolate(const Tensor& x_w, const Tensor& eps, double t) {
  if (x_w.shape() != eps.shape()) {
    fail(ErrorKind::kShape, "interpolate: " + shape_str(x_w.shape()) + " vs " + shape_str(eps.shape()));
  }
  std::vector<real> v(x_w.numel());
  const real a = static_cast<real>(1.0 - t), b = static_cast<real>(t);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * x_w.data()[i] + b * eps.data()[i];
  if (t == 0.0) std::copy(x_w.data().begin(), x_w.data().end(), v.begin());
  if (t == 1.0) std::copy(eps.data().begin(), eps.data().end(), v.begin());
  return Tensor::from(x_w.shape(), std::move(v));
}

FlowSample draw_flow_sample(const Tensor& x_w, SeededRng& rng, TimeMode mode) {
  FlowSample s;
  if (mode == TimeMode::kSample) {
    s.t = sample_logit_normal(rng);
  } else {
    s.t = rng.uniform_open();
    s.weight = logit_normal_pdf(s.t);
  }
  s.x_w = x_w.detach();
  s.eps = gaussian_like(x_w.shape(), rng);
  s.x_t = interpolate(s.x_w, s.eps, s.t);
  std::vector<real> target(x_w.numel());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = s.eps.data()[i] - s.x_w.data()[i];
  s.target = Tensor::from(x_w.shape(), std::move(target));
  return s;
}

Tensor flow_loss(const VelocityFn& model, const FlowSample& sample) {
  const Tensor loss = ops::mse(model(sample.x_t, sample.t), sample.target);
  return sample.weight == 1.0 ? loss : ops::scale(loss, sample.weight);
}

Tensor flow_loss(const VelocityFn& model, const Tensor& x_w, SeededRng& rng, TimeMode mode) {
  return flow_loss(model, draw_flow_sample(x_w, rng, mode));
}

Tensor euler_integrate(const Tensor& x1, const VelocityFn& cond, const VelocityFn& uncond, int steps, double guidance) {
  if (steps < 1) fail(ErrorKind::kConfig, "euler sampler needs at least one step, got " + std::to_string(steps));
  if (!(guidance >= 0.0)) fail(ErrorKind::kConfig, "guidance scale must be non-negative");
  NoGradGuard no_grad;
  std::vector<real> x(x1.data().begin(), x1.data().end());
  const double dt = 1.0 / steps;
  const real g = static_cast<real>(guidance);
  for (int k = 0; k < steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / steps;
    const Tensor xt = Tensor::from(x1.shape(), x);
    Tensor vc, vu;
    if (guidance != 0.0) vc = cond(xt, t);
    if (guidance != 1.0) vu = uncond(xt, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      real v;
      if (!vu.defined()) {
        v = vc.data()[i];
      } else if (!vc.defined()) {
        v = vu.data()[i];
      } else {
        v = vu.data()[i] + g * (vc.data()[i] - vu.data()[i]);
      }
      x[i] -= static_cast<real>(dt) * v;
    }
  }
  return Tensor::from(x1.shape(), std::move(x));
}

Image euler_sample(const VelocityFn& cond, const VelocityFn& uncond, int steps, double guidance, SeededRng& rng) {
  const Tensor noise = gaussian_like({kImageSize, kImageSize, kChannels}, rng);
  return tensor_to_image(euler_integrate(noise, cond, uncond, steps, guidance));
}

}  // namespace rdit
