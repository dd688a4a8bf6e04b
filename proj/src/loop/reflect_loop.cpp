// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/reflect_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rdit/data.hpp"
#include "rdit/error.hpp"

namespace rdit {

namespace fs = std::filesystem;
using nlohmann::json;

void LoopConfig::validate() const {
  if (K < 1) fail(ErrorKind::kConfig, "loop K must be at least 1");
  if (N < 0) fail(ErrorKind::kConfig, "loop N must be non-negative");
  if (sampler.steps < 1) fail(ErrorKind::kConfig, "sampler steps must be at least 1");
  if (!(sampler.guidance >= 0.0)) fail(ErrorKind::kConfig, "guidance scale must be non-negative");
}

void to_json(json& j, const LoopConfig& c) {
  j = json{{"K", c.K}, {"N", c.N}, {"steps", c.sampler.steps}, {"guidance", c.sampler.guidance}, {"seed", c.seed}};
}

void from_json(const json& j, LoopConfig& c) {
  c.K = j.at("K");
  c.N = j.at("N");
  c.sampler.steps = j.at("steps");
  c.sampler.guidance = j.at("guidance");
  c.seed = j.at("seed");
}

std::string_view stop_reason_name(StopReason r) {
  return r == StopReason::kNullFeedback ? "null-feedback" : "budget";
}

Trajectory reflect_loop(const PromptSpec& prompt, Generator& generator, Judge& judge, const LoopConfig& config,
                        const SeededRng& rng) {
  config.validate();
  Trajectory traj;
  traj.prompt = prompt;
  for (int i = 0; i <= config.N; ++i) {
    TrajectoryStep step;
    if (i > config.K) {
      SeededRng pick = rng.split(1000 + static_cast<std::uint64_t>(i));
      for (std::size_t j : pick.sample_without_replacement(static_cast<std::size_t>(i), static_cast<std::size_t>(config.K))) {
        step.context.push_back(static_cast<int>(j));
      }
    } else {
      for (int j = 0; j < i; ++j) step.context.push_back(j);
    }
    std::vector<ContextItem> items;
    items.reserve(step.context.size());
    for (int j : step.context) {
      const auto& prev = traj.steps[static_cast<std::size_t>(j)];
      items.push_back({prev.image, tokenize(prev.feedback.text), j});
    }
    SeededRng noise = rng.split(static_cast<std::uint64_t>(i));
    step.image = generator.generate(prompt, items, noise);
    step.feedback = judge.judge(prompt, step.image);
    const bool pass = step.feedback.is_null;
    traj.steps.push_back(std::move(step));
    if (pass) {
      traj.reason = StopReason::kNullFeedback;
      break;
    }
  }
  traj.selected = select_final(traj);
  return traj;
}

BestOfN best_of_n(const PromptSpec& prompt, Generator& generator, Judge& judge, int n, const SeededRng& rng,
                  bool early_stop) {
  if (n < 1) fail(ErrorKind::kConfig, "best-of-n needs n >= 1");
  BestOfN out;
  for (int i = 0; i < n; ++i) {
    SeededRng noise = rng.split(static_cast<std::uint64_t>(i));
    out.samples.push_back(generator.generate(prompt, {}, noise));
    out.feedback.push_back(judge.judge(prompt, out.samples.back()));
    if (early_stop && out.feedback.back().is_null) break;
  }
  out.selected = select_best(out.feedback);
  return out;
}

int select_final(const Trajectory& trajectory, std::size_t limit) {
  const std::size_t m = limit == 0 ? trajectory.steps.size() : std::min(limit, trajectory.steps.size());
  if (m == 0) fail(ErrorKind::kState, "cannot select from an empty trajectory");
  int best = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& fb = trajectory.steps[i].feedback;
    if (fb.is_null) return static_cast<int>(i);
    if (fb.violations.size() <= trajectory.steps[static_cast<std::size_t>(best)].feedback.violations.size()) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

int select_best(const std::vector<FeedbackRecord>& feedback, std::size_t limit) {
  const std::size_t m = limit == 0 ? feedback.size() : std::min(limit, feedback.size());
  if (m == 0) fail(ErrorKind::kState, "cannot select from no samples");
  int best = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (feedback[i].is_null) return static_cast<int>(i);
    if (feedback[i].violations.size() < feedback[static_cast<std::size_t>(best)].violations.size()) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

namespace {

void write_strip(const fs::path& path, const std::vector<TrajectoryStep>& steps) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  const int gap = 2;
  const int w = static_cast<int>(steps.size()) * (kImageSize + gap) - gap;
  os << "P6\n" << w << ' ' << kImageSize << "\n255\n";
  std::string row(static_cast<std::size_t>(w) * 3, '\xff');
  for (int y = 0; y < kImageSize; ++y) {
    for (std::size_t s = 0; s < steps.size(); ++s) {
      for (int x = 0; x < kImageSize; ++x) {
        for (int c = 0; c < kChannels; ++c) {
          const float v = std::clamp(steps[s].image.at(y, x, c), 0.0f, 1.0f);
          row[(s * (kImageSize + gap) + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)] =
              static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
        }
      }
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) fail(ErrorKind::kIo, "short write on " + path.string());
}

}  // namespace

void dump_trajectory(const fs::path& dir, const Trajectory& trajectory) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream os(dir / "trajectory.jsonl", std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + (dir / "trajectory.jsonl").string());
  for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
    const auto& s = trajectory.steps[i];
    char name[32];
    std::snprintf(name, sizeof name, "step_%02zu.ppm", i);
    write_ppm((dir / name).string(), s.image);
    json violations = feedback_to_json(s.feedback).at("violations");
    os << json{{"step", i},
               {"image", name},
               {"prompt", trajectory.prompt.text},
               {"feedback_text", s.feedback.text},
               {"pass", s.feedback.is_null},
               {"violations", violations},
               {"context", s.context},
               {"selected", static_cast<int>(i) == trajectory.selected},
               {"stop", i + 1 == trajectory.steps.size() ? json(stop_reason_name(trajectory.reason)) : json(nullptr)}}
              .dump()
       << "\n";
  }
  if (!os) fail(ErrorKind::kIo, "short write on trajectory.jsonl");
  if (!trajectory.steps.empty()) write_strip(dir / "strip.ppm", trajectory.steps);
}

}  // namespace rdit
