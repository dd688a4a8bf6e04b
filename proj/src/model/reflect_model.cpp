// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/reflect_model.hpp"

#include "rdit/error.hpp"

namespace rdit {

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["dit"] = spec.dit;
  j["context"] = spec.context ? nlohmann::json(*spec.context) : nlohmann::json(nullptr);
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  try {
    spec.dit = j.at("dit").get<DiTConfig>();
    if (j.contains("context") && !j.at("context").is_null()) spec.context = j.at("context").get<ContextConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("model spec: ") + e.what());
  }
  return spec;
}

ReflectModel::ReflectModel(const ModelSpec& spec) : spec_(spec) {
  dit_ = std::make_unique<DiT>(spec_.dit, store_);
  spec_.dit = dit_->config();
  if (spec_.context) context_ = std::make_unique<ContextEncoder>(*spec_.context, *dit_, store_);
}

const ContextEncoder& ReflectModel::context() const {
  if (!context_) fail(ErrorKind::kState, "model has no context encoder");
  return *context_;
}

ConditioningBundle ReflectModel::condition(const TokenSeq& prompt, std::span<const ContextItem> items,
                                           bool frozen_prompt) const {
  const Tensor prompt_emb = dit_->encode_prompt(prompt.active(), frozen_prompt);
  if (items.empty()) return build_conditioning(prompt_emb, {});
  return build_conditioning(prompt_emb, context().context_transform(items));
}

void ReflectModel::save(const std::filesystem::path& path, nlohmann::json meta) const {
  meta["model"] = model_spec_to_json(spec_);
  save_checkpoint(path, store_, meta);
}

std::unique_ptr<ReflectModel> ReflectModel::load(const std::filesystem::path& path, std::optional<ContextConfig> context,
                                                 nlohmann::json* meta_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.meta.contains("model")) fail(ErrorKind::kFormat, path.string() + ": checkpoint lacks a model description");
  ModelSpec spec = model_spec_from_json(ckpt.meta.at("model"));
  const bool stored_context = spec.context.has_value();
  if (context) {
    if (stored_context && !(*spec.context == *context)) {
      fail(ErrorKind::kConfig, path.string() + ": context configuration differs from the checkpoint");
    }
    spec.context = context;
  }
  auto model = std::make_unique<ReflectModel>(spec);
  const auto missing = apply_checkpoint(ckpt, model->store_);
  for (const auto& name : missing) {
    if (stored_context || name.rfind("ctx.", 0) != 0) {
      fail(ErrorKind::kFormat, path.string() + ": checkpoint is missing parameter " + name);
    }
  }
  if (meta_out) *meta_out = ckpt.meta;
  return model;
}

}  // namespace rdit
