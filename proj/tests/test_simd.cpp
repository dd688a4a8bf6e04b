// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "rdit/rng.hpp"
#include "rdit/simd.hpp"

using namespace rdit;

namespace {

std::vector<float> random_vec(std::size_t n, SeededRng& rng, double scale = 1.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal() * scale);
  return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

const simd::KernelSet* vector_set() {
  const auto* set = simd::avx2_kernels();
  return set && simd::cpu_supports_avx2_fma() ? set : nullptr;
}

}  // namespace

TEST_CASE("gemm variants agree on odd shapes") {
  const auto* fast = vector_set();
  if (!fast) return;
  const auto& ref = simd::scalar_kernels();
  SeededRng rng(1);
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 17, 5}, {64, 48, 128}, {7, 33, 65}, {16, 16, 16}}) {
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    for (bool acc : {false, true}) {
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      ref.gemm(m, n, k, a.data(), k, b.data(), n, c0.data(), n, acc);
      fast->gemm(m, n, k, a.data(), k, b.data(), n, c1.data(), n, acc);
      CHECK(max_abs_diff(c0, c1) < 1e-4 * std::sqrt(static_cast<double>(k)));
    }
  }
}

TEST_CASE("elementwise and row kernels agree") {
  const auto* fast = vector_set();
  if (!fast) return;
  const auto& ref = simd::scalar_kernels();
  SeededRng rng(2);
  for (std::size_t n : {1u, 7u, 8u, 31u, 129u}) {
    const auto x = random_vec(n, rng, 3.0), y = random_vec(n, rng);
    CHECK(std::abs(ref.dot(n, x.data(), y.data()) - fast->dot(n, x.data(), y.data())) < 1e-9 * n + 1e-9);
    CHECK(std::abs(ref.sum(n, x.data()) - fast->sum(n, x.data())) < 1e-9 * n + 1e-9);

    std::vector<float> r0(n), r1(n);
    ref.gelu(n, x.data(), r0.data());
    fast->gelu(n, x.data(), r1.data());
    CHECK(max_abs_diff(r0, r1) < 1e-5);

    std::vector<float> d0 = y, d1 = y;
    ref.gelu_backward(n, x.data(), y.data(), d0.data());
    fast->gelu_backward(n, x.data(), y.data(), d1.data());
    CHECK(max_abs_diff(d0, d1) < 1e-5);

    ref.mul(n, x.data(), y.data(), r0.data());
    fast->mul(n, x.data(), y.data(), r1.data());
    CHECK(max_abs_diff(r0, r1) == 0.0);

    r0 = y;
    r1 = y;
    ref.axpy(n, 0.5f, x.data(), r0.data());
    fast->axpy(n, 0.5f, x.data(), r1.data());
    CHECK(max_abs_diff(r0, r1) < 1e-6);
  }
  const std::size_t rows = 5, cols = 37;
  auto s0 = random_vec(rows * cols, rng, 4.0);
  auto s1 = s0;
  ref.softmax_rows(rows, cols, s0.data());
  fast->softmax_rows(rows, cols, s1.data());
  CHECK(max_abs_diff(s0, s1) < 1e-6);

  const auto x = random_vec(rows * cols, rng), gain = random_vec(cols, rng);
  std::vector<float> y0(rows * cols), y1(rows * cols), i0(rows), i1(rows);
  ref.rms_norm_rows(rows, cols, x.data(), gain.data(), y0.data(), i0.data(), 1e-6f);
  fast->rms_norm_rows(rows, cols, x.data(), gain.data(), y1.data(), i1.data(), 1e-6f);
  CHECK(max_abs_diff(y0, y1) < 1e-5);
  CHECK(max_abs_diff(i0, i1) < 1e-5);
}

TEST_CASE("active set honours the scalar override") {
  const auto& active = simd::active_kernels();
  CHECK(active.name != nullptr);
  if (!vector_set()) CHECK(&active == &simd::scalar_kernels());
}
