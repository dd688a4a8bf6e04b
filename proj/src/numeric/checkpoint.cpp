// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "rdit/error.hpp"

namespace rdit {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor tensor, bool trainable) {
  if (contains(name)) fail(ErrorKind::kState, "duplicate parameter name " + name);
  if (trainable) tensor.set_requires_grad(true);
  entries_.push_back({name, std::move(tensor), trainable});
  return entries_.back().tensor;
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  fail(ErrorKind::kState, "unknown parameter " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  fail(ErrorKind::kState, "unknown parameter " + name);
}

std::vector<Tensor> ParamStore::trainable(const std::vector<std::string>& prefixes) const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (!e.trainable) continue;
    bool match = prefixes.empty();
    for (const auto& p : prefixes) match = match || e.name.rfind(p, 0) == 0;
    if (match) out.push_back(e.tensor);
  }
  return out;
}

void ParamStore::set_trainable(const std::string& prefix, bool on) {
  for (auto& e : entries_) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    e.trainable = on;
    e.tensor.set_requires_grad(on);
  }
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& e : params.entries()) {
    header["tensors"].push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"trainable", e.trainable}});
  }
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, 6);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> buf;
  for (const auto& e : params.entries()) {
    const auto d = e.tensor.data();
    buf.assign(d.begin(), d.end());
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) fail(ErrorKind::kIo, "short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 14 || std::memcmp(bytes.data(), kCheckpointMagic, 6) != 0) {
    fail(ErrorKind::kFormat, path.string() + ": bad magic, expected RFLTv1");
  }
  const std::uint64_t hlen = read_u64(bytes.data() + 6);
  if (hlen > bytes.size() - 14) fail(ErrorKind::kFormat, path.string() + ": truncated header");
  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 14, bytes.begin() + 14 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": malformed header: " + e.what());
  }
  ck.meta = header.value("meta", nlohmann::json::object());
  std::size_t offset = 14 + hlen;
  for (const auto& t : header.at("tensors")) {
    CheckpointTensor ct;
    ct.name = t.at("name").get<std::string>();
    ct.shape = t.at("shape").get<Shape>();
    ct.trainable = t.value("trainable", true);
    const std::size_t n = shape_numel(ct.shape);
    if (bytes.size() - offset < n * sizeof(float)) {
      fail(ErrorKind::kFormat, path.string() + ": truncated payload at tensor " + ct.name);
    }
    ct.values.resize(n);
    std::memcpy(ct.values.data(), bytes.data() + offset, n * sizeof(float));
    offset += n * sizeof(float);
    ck.tensors.push_back(std::move(ct));
  }
  if (offset != bytes.size()) fail(ErrorKind::kFormat, path.string() + ": trailing bytes after payload");
  return ck;
}

std::vector<std::string> apply_checkpoint(const Checkpoint& ckpt, ParamStore& params) {
  std::vector<std::string> missing;
  for (auto& e : params.entries()) {
    const CheckpointTensor* t = ckpt.find(e.name);
    if (!t) {
      missing.push_back(e.name);
      continue;
    }
    if (t->shape != e.tensor.shape()) {
      fail(ErrorKind::kFormat, "checkpoint tensor " + e.name + " has shape " + shape_str(t->shape) +
                                   ", model expects " + shape_str(e.tensor.shape()));
    }
    auto d = e.tensor.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<real>(t->values[i]);
  }
  return missing;
}

}  // namespace rdit
