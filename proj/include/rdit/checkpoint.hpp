// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Named parameter registry and its on-disk container:
//
//   "RFLTv1" | u64 LE header length | JSON header | f32 LE payloads
//
// The header lists every tensor (name, shape, trainable) in payload order
// plus free-form metadata (configs, seeds, dataset hashes).

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdit/hash.hpp"
#include "rdit/tensor.hpp"

namespace rdit {

inline constexpr char kCheckpointMagic[] = "RFLTv1";

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

class ParamStore {
 public:
  // Registers a tensor; trainable entries get requires_grad.
  Tensor& add(const std::string& name, Tensor tensor, bool trainable = true);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }

  // Trainable tensors whose name starts with one of the prefixes.
  std::vector<Tensor> trainable(const std::vector<std::string>& prefixes = {}) const;
  void set_trainable(const std::string& prefix, bool on);
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  bool trainable = true;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every tensor of the checkpoint whose name exists in the store.
// Shape disagreement is an error; names missing from the checkpoint are
// returned so the caller can decide whether fresh initialization is fine.
std::vector<std::string> apply_checkpoint(const Checkpoint& ckpt, ParamStore& params);

}  // namespace rdit
