// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rdit/error.hpp"

namespace rdit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream + 0x5851F42D4C957F2Dull))) {}

double SeededRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SeededRng::uniform_open() {
  double u = 0.0;
  do {
    u = uniform();
  } while (u == 0.0);
  return u;
}

int SeededRng::uniform_int(int lo, int hi) {
  if (hi < lo) fail(ErrorKind::kState, "uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r = 0;
  do {
    r = engine_();
  } while (r >= limit);
  return lo + static_cast<int>(r % span);
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

SeededRng SeededRng::split(std::uint64_t id) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(stream_)), splitmix64(id ^ 0xD1B54A32D192ED03ull));
}

std::vector<std::size_t> SeededRng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) fail(ErrorKind::kState, "sample_without_replacement: k exceeds n");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_int(0, static_cast<int>(n - i - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sample_logit_normal(SeededRng& rng) { return sigmoid(rng.normal()); }

double logit_normal_cdf(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double z = std::log(t / (1.0 - t));
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double logit_normal_pdf(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double z = std::log(t / (1.0 - t));
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * t * (1.0 - t));
}

}  // namespace rdit
