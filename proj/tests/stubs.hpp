// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Model-free generators and judges for loop, data and eval tests.

#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "rdit/generator.hpp"
#include "rdit/world.hpp"

namespace rdit::testing {

// Renders a passing scene with a per-category probability; ignores context.
class SceneGenerator : public Generator {
 public:
  explicit SceneGenerator(std::array<double, kNumCategories> pass_prob, bool context = false)
      : pass_prob_(pass_prob), context_(context) {}
  bool supports_context() const override { return context_; }

  std::vector<std::size_t> context_sizes;  // one entry per call

 protected:
  Image do_generate(const PromptSpec& prompt, std::span<const ContextItem> context, SeededRng& rng) override {
    {
      std::lock_guard lock(mu_);
      context_sizes.push_back(context.size());
    }
    const bool satisfy = rng.bernoulli(pass_prob_[static_cast<std::size_t>(prompt.category)]);
    return render(sample_scene(prompt, rng, satisfy));
  }

 private:
  std::array<double, kNumCategories> pass_prob_;
  bool context_;
  std::mutex mu_;
};

// Fails until it has seen `needed` context items, then passes.
class LearningGenerator : public Generator {
 public:
  explicit LearningGenerator(std::size_t needed) : needed_(needed) {}
  bool supports_context() const override { return true; }

 protected:
  Image do_generate(const PromptSpec& prompt, std::span<const ContextItem> context, SeededRng& rng) override {
    return render(sample_scene(prompt, rng, context.size() >= needed_));
  }

 private:
  std::size_t needed_;
};

class AlwaysPassJudge : public Judge {
 protected:
  FeedbackRecord do_judge(const PromptSpec&, const Image&) override { return make_feedback({}); }
};

// Reports `count` missing-object violations for every image.
class AlwaysFailJudge : public Judge {
 public:
  explicit AlwaysFailJudge(int count = 1) : count_(count) {}

 protected:
  FeedbackRecord do_judge(const PromptSpec& prompt, const Image&) override {
    Violation v;
    v.kind = ViolationKind::kMissing;
    v.shape = prompt.shape_a;
    return make_feedback(std::vector<Violation>(static_cast<std::size_t>(count_), v));
  }

 private:
  int count_;
};

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rdit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rdit::testing
