// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/optim.hpp"

#include <cmath>

#include "rdit/error.hpp"

namespace rdit {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (Tensor& p : params_) {
    if (!p.requires_grad()) fail(ErrorKind::kState, "AdamW: parameter without requires_grad");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (real g : params_[i].grad()) {
      if (!std::isfinite(g)) {
        fail(ErrorKind::kNumeric, "AdamW: non-finite gradient in parameter " + std::to_string(i) + ", step rejected");
      }
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto data = params_[i].data();
    auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      const double p = static_cast<double>(data[j]) * decay - lr * mhat / (std::sqrt(vhat) + config_.eps);
      data[j] = static_cast<real>(p);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup) {
  if (warmup <= 0 || step >= warmup) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
}

}  // namespace rdit
