// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdit/context_encoder.hpp"
#include "rdit/generator.hpp"
#include "rdit/world.hpp"

namespace rdit {

inline constexpr char kDatasetFormat[] = "reflect-ds/1";

// Train and eval prompt pools. Pools are draws from disjoint sets of
// distinct prompt ids, so a prompt may repeat within a pool.
struct PromptPools {
  std::vector<PromptSpec> train;
  std::vector<PromptSpec> eval;
};

PromptPools build_prompt_pool(int n_train, int n_eval, SeededRng& rng);
std::uint64_t pool_hash(const std::vector<PromptSpec>& pool);
std::map<std::string, int> category_counts(const std::vector<PromptSpec>& pool);
nlohmann::json pools_to_json(const PromptPools& pools);
PromptPools pools_from_json(const nlohmann::json& j);

struct PretrainExample {
  PromptSpec prompt;
  SceneGraph scene;
  Image image;
};

// Renders of satisfied scenes for prompts drawn round-robin from the pool.
std::vector<PretrainExample> build_pretrain_set(const std::vector<PromptSpec>& pool, int n, SeededRng& rng);

struct LabeledImage {
  PromptSpec prompt;
  int index = 0;  // generation order within the prompt
  Image image;
  FeedbackRecord feedback;
  bool pass = false;
};

// m samples per pool entry, judged. Work is split across jobs threads; each
// pool entry uses its own rng stream so results do not depend on jobs.
std::vector<LabeledImage> synthesize_labeled_pool(Generator& generator, Judge& judge,
                                                  const std::vector<PromptSpec>& prompts, int m_per_prompt,
                                                  std::uint64_t seed, int jobs);

struct CuratedExample {
  PromptSpec prompt;
  Image good;
  std::vector<ContextItem> context_pool;  // failing generations, chronological
};

struct ReflectDataset {
  std::vector<CuratedExample> examples;
  int prompts_kept = 0;
  int dropped_all_pass = 0;
  int dropped_all_fail = 0;
};

ReflectDataset build_reflect_dataset(const std::vector<LabeledImage>& pool);

struct SftExample {
  PromptSpec prompt;
  Image image;
};

// Positive images of the reflection dataset, without context.
std::vector<SftExample> build_sft_set(const ReflectDataset& reflect);

std::vector<ContextItem> draw_training_context(const CuratedExample& example, int k, SeededRng& rng,
                                               double empty_prob = 0.1);

// ------------------------------------------------------------------ disk

struct DatasetManifest {
  std::string format = kDatasetFormat;
  std::string kind;  // pretrain | labeled | reflect | sft
  std::string pool_hash;
  std::string eval_pool_hash;
  std::string generator_checkpoint;
  std::size_t total = 0;
  std::map<std::string, int> counts;
  std::vector<std::uint64_t> offsets;  // byte offset of each record in records.jsonl
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
DatasetManifest read_manifest(const std::filesystem::path& dir);

void write_pretrain_set(const std::filesystem::path& dir, const std::vector<PretrainExample>& set,
                        DatasetManifest manifest);
std::vector<PretrainExample> read_pretrain_set(const std::filesystem::path& dir);

void write_labeled_pool(const std::filesystem::path& dir, const std::vector<LabeledImage>& pool,
                        DatasetManifest manifest);
std::vector<LabeledImage> read_labeled_pool(const std::filesystem::path& dir);

// Reflection and SFT sets store each distinct image once.
void write_reflect_dataset(const std::filesystem::path& dir, const ReflectDataset& ds, DatasetManifest manifest);
ReflectDataset read_reflect_dataset(const std::filesystem::path& dir);
void write_sft_set(const std::filesystem::path& dir, const std::vector<SftExample>& set, DatasetManifest manifest);
std::vector<SftExample> read_sft_set(const std::filesystem::path& dir);

std::uint64_t file_hash(const std::filesystem::path& path);
SceneGraph scene_from_json(const nlohmann::json& j);
nlohmann::json feedback_to_json(const FeedbackRecord& fb);
FeedbackRecord feedback_from_json(const nlohmann::json& j);

}  // namespace rdit
