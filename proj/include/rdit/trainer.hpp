// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdit/data.hpp"
#include "rdit/flow.hpp"
#include "rdit/reflect_model.hpp"

namespace rdit {

enum class TrainKind { kPretrain, kReflect, kSft };

std::string_view train_kind_name(TrainKind k);
TrainKind parse_train_kind(std::string_view s);

struct TrainConfig {
  TrainKind kind = TrainKind::kPretrain;
  int steps = 1000;
  int batch = 32;
  double lr = 1e-3;
  int warmup = 100;
  std::uint64_t seed = 0;
  std::string dataset;  // dataset directory
  int K = 3;
  double cond_dropout = 0.1;
  double empty_context_prob = 0.1;
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  bool freeze_prompt = true;  // reflect only
  bool freeze_table = false;  // reflect only
  TimeMode time_mode = TimeMode::kSample;
  int log_every = 1;
  int heldout_every = 0;    // 0: only before and after
  double heldout_fraction = 0.05;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainPoint {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wallclock_ms = 0.0;
};

struct HeldoutPoint {
  std::int64_t step = 0;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<TrainPoint> curve;
  std::vector<HeldoutPoint> heldout;
  double wallclock_ms = 0.0;
  std::string checkpoint_id;
  nlohmann::json config;
};

void write_report_csv(const std::filesystem::path& path, const TrainReport& report);

struct TrainExample {
  TokenSeq prompt;
  Tensor x_w;                              // model space
  const CuratedExample* curated = nullptr;  // reflect: source of contexts
};

std::vector<TrainExample> examples_from(const std::vector<PretrainExample>& set);
std::vector<TrainExample> examples_from(const std::vector<SftExample>& set);
std::vector<TrainExample> examples_from(const ReflectDataset& ds);

// Mean flow loss over the examples with draws fixed by seed.
double heldout_loss(const ReflectModel& model, const TrainConfig& config, std::span<const TrainExample> examples,
                    std::uint64_t seed);

// Runs config.steps optimizer steps on the model in place. Each batch item
// draws its example, dropout, context and flow sample from an rng stream
// keyed by (seed, step, item), so the run is a pure function of its inputs.
TrainReport train(ReflectModel& model, const TrainConfig& config, std::span<const TrainExample> train_set,
                  std::span<const TrainExample> heldout_set = {},
                  const std::function<void(const TrainPoint&)>& on_log = {});

// Deterministic train/held-out split: every example whose index hashes
// below the fraction is held out (at least one, never all).
void split_heldout(std::vector<TrainExample> all, double fraction, std::uint64_t seed,
                   std::vector<TrainExample>& train_out, std::vector<TrainExample>& heldout_out);

// Loads config.dataset, trains, writes the checkpoint and returns the report.
// The checkpoint header records the config, dataset hashes and base id.
TrainReport run_training(ReflectModel& model, const TrainConfig& config, const std::filesystem::path& checkpoint,
                         const std::string& base_checkpoint_id = "",
                         const std::function<void(const TrainPoint&)>& on_log = {});

std::string checkpoint_id(const std::filesystem::path& checkpoint);

}  // namespace rdit
