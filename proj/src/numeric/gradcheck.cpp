// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/gradcheck.hpp"

#include <cmath>

#include "rdit/error.hpp"

namespace rdit {

namespace {

double eval_plain(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  const Tensor out = f();
  const double v = out.item();
  if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "finite_diff_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h) {
  if (!(h > 0.0)) fail(ErrorKind::kState, "finite_diff_check: step must be positive");
  for (Tensor& leaf : leaves) {
    if (!leaf.requires_grad()) leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  active_tape().clear();
  const Tensor loss = f();
  if (!std::isfinite(loss.item())) fail(ErrorKind::kNumeric, "finite_diff_check: non-finite function value");
  std::vector<std::vector<double>> analytic;
  if (loss.requires_grad()) {
    backward(loss);
    for (const Tensor& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  } else {
    // Constant in every leaf.
    active_tape().clear();
    for (const Tensor& leaf : leaves) analytic.emplace_back(leaf.numel(), 0.0);
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    auto data = leaves[p].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const real orig = data[i];
      data[i] = static_cast<real>(orig + h);
      const double up = eval_plain(f);
      data[i] = static_cast<real>(orig - h);
      const double down = eval_plain(f);
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace rdit
