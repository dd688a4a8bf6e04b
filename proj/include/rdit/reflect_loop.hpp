// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Verification-reflection loop, best-of-n sampling and final-image selection.
//
// Rng layout shared by both procedures: image i of a prompt draws its noise
// from rng.split(i), and the loop's context subsampling before image i uses
// rng.split(1000 + i). The loop's first image therefore equals best-of-n's
// first sample.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rdit/generator.hpp"

namespace rdit {

struct LoopConfig {
  int K = 3;
  int N = 20;  // refinement iterations; at most N + 1 images
  SamplerConfig sampler;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const LoopConfig& c);
void from_json(const nlohmann::json& j, LoopConfig& c);

enum class StopReason { kNullFeedback, kBudget };
std::string_view stop_reason_name(StopReason r);

struct TrajectoryStep {
  Image image;
  FeedbackRecord feedback;
  std::vector<int> context;  // indices of earlier steps used as context
};

struct Trajectory {
  PromptSpec prompt;
  std::vector<TrajectoryStep> steps;
  StopReason reason = StopReason::kBudget;
  int selected = 0;
};

Trajectory reflect_loop(const PromptSpec& prompt, Generator& generator, Judge& judge, const LoopConfig& config,
                        const SeededRng& rng);

struct BestOfN {
  std::vector<Image> samples;
  std::vector<FeedbackRecord> feedback;
  int selected = 0;
};

// With early_stop sampling ends at the first passing image, which is the
// one selected anyway.
BestOfN best_of_n(const PromptSpec& prompt, Generator& generator, Judge& judge, int n, const SeededRng& rng,
                  bool early_stop = true);

// First passing image, else fewest violations with ties going to the
// latest. Only the first `limit` steps are considered (0: all).
int select_final(const Trajectory& trajectory, std::size_t limit = 0);

// First passing sample, else fewest violations with ties going to the
// lowest index.
int select_best(const std::vector<FeedbackRecord>& feedback, std::size_t limit = 0);

// step_XX.ppm images plus trajectory.jsonl, one line per step.
void dump_trajectory(const std::filesystem::path& dir, const Trajectory& trajectory);

}  // namespace rdit
