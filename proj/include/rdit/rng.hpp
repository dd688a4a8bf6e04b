// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace rdit {

// Seeded stream. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; all distributions are implemented here so draws
// are identical on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform();
  // (0, 1)
  double uniform_open();
  // Inclusive range, unbiased.
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  // Independent child stream, a pure function of (seed, stream, id).
  SeededRng split(std::uint64_t id) const;

  // k distinct indices from [0, n), returned in increasing order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

double sigmoid(double z);
// t = sigmoid(z), z ~ N(0, 1)
double sample_logit_normal(SeededRng& rng);
double logit_normal_cdf(double t);
double logit_normal_pdf(double t);

}  // namespace rdit
