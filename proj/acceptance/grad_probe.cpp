// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Float64 gradient probe. Prints "<max rel error> <checks> <worst case>".

#include <cstdio>
#include <string>

#include "grad_suite.hpp"

int main() {
  using namespace rdit;
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  const gradsuite::Check check = [&](const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                                     const char* name, double h) {
    const double e = finite_diff_check(f, leaves, h).max_rel_error;
    ++checks;
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
    return e;
  };
  try {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      gradsuite::kernels(seed, check);
      gradsuite::dit(seed, check);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "grad probe: %s\n", e.what());
    return 1;
  }
  std::printf("%.3e %d %s\n", worst, checks, worst_name.c_str());
  return 0;
}
