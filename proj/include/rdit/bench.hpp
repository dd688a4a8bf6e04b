// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration, evaluation harness, ablations, reports and the
// pipeline stages behind the command-line tool.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdit/data.hpp"
#include "rdit/reflect_loop.hpp"
#include "rdit/reflect_model.hpp"
#include "rdit/trainer.hpp"

namespace rdit {

// ------------------------------------------------------------------ config

struct DataConfig {
  int n_train = 2000;
  int n_eval = 300;
  int pretrain_size = 20000;
  int m_per_prompt = 8;
  double judge_noise = 0.0;  // flip probability of the curation/loop judge
};

struct EvalConfig {
  std::vector<int> budgets{4, 8, 12, 16, 20};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> methods{"base", "best-of-n", "sft+bestofn", "reflect"};
  int max_prompts = 0;  // 0: whole eval pool
};

struct AblationConfig {
  std::vector<int> K{1, 2, 3};
  std::vector<int> ct_depth{1, 2};
  std::vector<int> grid{2, 4};
  std::vector<std::uint64_t> seeds{0};
  int max_prompts = 0;
};

struct RunPaths {
  std::filesystem::path out;
  std::filesystem::path pools;
  std::filesystem::path pretrain_data;
  std::filesystem::path labeled_data;
  std::filesystem::path reflect_data;
  std::filesystem::path sft_data;
  std::filesystem::path base_checkpoint;
  std::filesystem::path reflect_checkpoint;
  std::filesystem::path sft_checkpoint;
  std::filesystem::path eval_dir;
  std::filesystem::path ablation_dir;
  std::filesystem::path demo_dir;
};

struct RunConfig {
  std::string out;
  std::uint64_t seed = 0;
  int jobs = 1;
  DiTConfig model;
  ContextConfig context;
  DataConfig data;
  TrainConfig pretrain;
  TrainConfig reflect;
  TrainConfig sft;
  LoopConfig loop;
  EvalConfig eval;
  AblationConfig ablation;

  RunConfig();
  void validate() const;
  RunPaths paths() const;
  ModelSpec base_spec() const { return {model, std::nullopt}; }
  ModelSpec reflect_spec() const { return {model, context}; }
};

nlohmann::json config_to_json(const RunConfig& c);
// Strict parse: every key must be known and typed like its default.
// Absent keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config(const std::filesystem::path& path);
// Makes out absolute and fills dataset paths of the training sections.
void resolve_config(RunConfig& c);
void echo_config(const RunConfig& c, const std::filesystem::path& path);

// ------------------------------------------------------------------ eval

inline constexpr std::array<const char*, 4> kMethods{"base", "best-of-n", "sft+bestofn", "reflect"};

struct BudgetScore {
  int budget = 0;
  std::array<double, kNumCategories> category{};
  double overall = 0.0;
};

struct EvalReport {
  std::string method;
  std::string variant = "main";
  std::vector<std::uint64_t> seeds;
  std::size_t prompts = 0;
  std::vector<BudgetScore> curve;
  std::size_t generator_calls = 0;
  std::size_t judge_calls = 0;

  const BudgetScore& at(int budget) const;
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// Per-prompt outcome of one seed: pass bit at each budget.
struct PromptOutcome {
  std::size_t prompt_index = 0;
  std::uint64_t seed = 0;
  std::vector<bool> pass;  // aligned with budgets
  int images = 0;          // images generated
};

struct EvalOptions {
  std::vector<int> budgets{4, 8, 12, 16, 20};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int K = 3;
  int jobs = 1;
  std::function<void(const PromptOutcome&)> on_outcome;  // called from workers
};

// Runs a method over the eval pool. The generator must support context for
// the reflect method. Scores come from score_prompt, independent of judge.
EvalReport run_eval(const std::string& method, Generator& generator, Judge& judge,
                    const std::vector<PromptSpec>& eval_pool, const EvalOptions& options);

// Overall score is the unweighted mean of the six category rates.
BudgetScore make_budget_score(int budget, const std::array<double, kNumCategories>& category);

// ------------------------------------------------------------------ reports

// CSV: method,variant,budget,category,score. One row per report, budget and
// category plus the overall row.
void write_report_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
// Overall score against budget, one line per report.
std::string render_svg(const std::vector<EvalReport>& reports, const std::string& title);
void emit_report(const std::vector<EvalReport>& reports, const std::filesystem::path& dir, const std::string& name,
                 const std::string& title);
// Rows are report variants, columns are budgets, cells overall scores.
std::string trend_table(const std::vector<EvalReport>& reports);

// ------------------------------------------------------------------ stages

using Logger = std::function<void(const std::string&)>;

void stage_gen_data(const RunConfig& c, const Logger& log);
TrainReport stage_pretrain(const RunConfig& c, const Logger& log);
void stage_curate(const RunConfig& c, const Logger& log);
TrainReport stage_train_reflect(const RunConfig& c, const Logger& log);
TrainReport stage_train_sft(const RunConfig& c, const Logger& log);
std::vector<EvalReport> stage_eval(const RunConfig& c, const Logger& log);
std::vector<EvalReport> stage_ablate(const RunConfig& c, const Logger& log);
Trajectory stage_loop_demo(const RunConfig& c, std::size_t prompt_index, const Logger& log);

PromptPools load_pools(const RunConfig& c);
std::unique_ptr<Judge> make_judge(const RunConfig& c, std::uint64_t salt);

}  // namespace rdit
