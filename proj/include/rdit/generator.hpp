// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Image generators and judges behind the refinement loop. Both count their
// invocations so that call footprints can be compared across methods.

#pragma once

#include <atomic>
#include <cstddef>
#include <span>

#include "rdit/context_encoder.hpp"
#include "rdit/reflect_model.hpp"
#include "rdit/world.hpp"

namespace rdit {

struct SamplerConfig {
  int steps = 20;
  double guidance = 3.0;
};

class Generator {
 public:
  virtual ~Generator() = default;

  Image generate(const PromptSpec& prompt, std::span<const ContextItem> context, SeededRng& rng) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_generate(prompt, context, rng);
  }
  virtual bool supports_context() const = 0;
  std::size_t calls() const { return calls_.load(); }
  void reset_calls() { calls_ = 0; }

 protected:
  virtual Image do_generate(const PromptSpec& prompt, std::span<const ContextItem> context, SeededRng& rng) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

// Euler sampling from a trained model with classifier-free guidance.
class ModelGenerator : public Generator {
 public:
  ModelGenerator(const ReflectModel& model, SamplerConfig sampler);
  bool supports_context() const override { return model_.has_context(); }
  const SamplerConfig& sampler() const { return sampler_; }

 protected:
  Image do_generate(const PromptSpec& prompt, std::span<const ContextItem> context, SeededRng& rng) override;

 private:
  const ReflectModel& model_;
  SamplerConfig sampler_;
  CrossKV null_kv_;
};

class Judge {
 public:
  virtual ~Judge() = default;

  FeedbackRecord judge(const PromptSpec& prompt, const Image& image) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_judge(prompt, image);
  }
  std::size_t calls() const { return calls_.load(); }
  void reset_calls() { calls_ = 0; }

 protected:
  virtual FeedbackRecord do_judge(const PromptSpec& prompt, const Image& image) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

class OracleJudge : public Judge {
 protected:
  FeedbackRecord do_judge(const PromptSpec& prompt, const Image& image) override { return judge_feedback(prompt, image); }
};

// Error injection: with probability flip_prob the verdict is inverted (a
// correct image gets a fabricated missing-object complaint, a wrong one is
// declared correct). The draw is a pure function of (seed, image, prompt).
class NoisyJudge : public Judge {
 public:
  NoisyJudge(double flip_prob, std::uint64_t seed) : flip_prob_(flip_prob), seed_(seed) {}

 protected:
  FeedbackRecord do_judge(const PromptSpec& prompt, const Image& image) override;

 private:
  double flip_prob_;
  std::uint64_t seed_;
};

}  // namespace rdit
