// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>

#include "json.hpp"
#include "rdit/checkpoint.hpp"
#include "rdit/context_encoder.hpp"
#include "rdit/dit.hpp"

namespace rdit {

struct ModelSpec {
  DiTConfig dit;
  std::optional<ContextConfig> context;  // absent for base and SFT models
};

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Parameter store plus the generator network and, for reflection models, the
// context encoder.
class ReflectModel {
 public:
  explicit ReflectModel(const ModelSpec& spec);
  ReflectModel(const ReflectModel&) = delete;
  ReflectModel& operator=(const ReflectModel&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const DiT& dit() const { return *dit_; }
  bool has_context() const { return static_cast<bool>(context_); }
  const ContextEncoder& context() const;

  // Conditioning for a prompt and an optional context. frozen_prompt detaches
  // the token table on the prompt path.
  ConditioningBundle condition(const TokenSeq& prompt, std::span<const ContextItem> items,
                               bool frozen_prompt = false) const;

  void save(const std::filesystem::path& path, nlohmann::json meta = nlohmann::json::object()) const;

  // Loads a checkpoint. With context set, a checkpoint without context
  // parameters is accepted and the encoder keeps its fresh initialization.
  static std::unique_ptr<ReflectModel> load(const std::filesystem::path& path,
                                            std::optional<ContextConfig> context = std::nullopt,
                                            nlohmann::json* meta_out = nullptr);

 private:
  ModelSpec spec_;
  ParamStore store_;
  std::unique_ptr<DiT> dit_;
  std::unique_ptr<ContextEncoder> context_;
};

}  // namespace rdit
