// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rdit/tensor.hpp"

namespace rdit {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with bias correction and decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  // Applies one update with the given learning rate using the parameters'
  // current gradients. A non-finite gradient leaves everything untouched
  // and throws ErrorKind::kNumeric.
  void step(double lr);
  void step() { step(config_.lr); }
  void zero_grad();

  std::int64_t step_count() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t steps_ = 0;
};

// Linear warmup to base_lr over warmup steps, constant afterwards.
double warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup);

}  // namespace rdit
