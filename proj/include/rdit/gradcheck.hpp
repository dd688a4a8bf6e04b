// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "rdit/tensor.hpp"

namespace rdit {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares backward() against central differences of a scalar function of
// the given leaves: max over coordinates of |a - n| / (|a| + 1e-8). The
// function is re-evaluated at perturbed leaf values, so it must rebuild its
// result from the leaves on every call.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h);

}  // namespace rdit
