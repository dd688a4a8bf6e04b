// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "rdit/data.hpp"
#include "rdit/error.hpp"
#include "rdit/hash.hpp"

namespace rdit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T, std::size_t N, class F>
T lookup(const std::array<T, N>& values, F name_of, const std::string& s, const char* what) {
  for (T v : values) {
    if (name_of(v) == s) return v;
  }
  fail(ErrorKind::kFormat, std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::array<ViolationKind, 4> kAllViolationKinds{ViolationKind::kMissing, ViolationKind::kCount,
                                                          ViolationKind::kColor, ViolationKind::kPosition};

std::string_view violation_kind_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::kMissing: return "missing";
    case ViolationKind::kCount: return "count";
    case ViolationKind::kColor: return "color";
    case ViolationKind::kPosition: return "position";
  }
  return "?";
}

json violation_to_json(const Violation& v) {
  json j{{"kind", violation_kind_name(v.kind)}, {"shape", shape_name(v.shape)}};
  if (v.color) j["color"] = color_name(*v.color);
  switch (v.kind) {
    case ViolationKind::kCount:
      j["expected"] = v.expected;
      j["found"] = v.found;
      break;
    case ViolationKind::kColor: j["actual_color"] = color_name(v.actual_color); break;
    case ViolationKind::kPosition:
      j["relation"] = relation_phrase(v.relation);
      j["other"] = shape_name(v.other);
      break;
    case ViolationKind::kMissing: break;
  }
  return j;
}

Violation violation_from_json(const json& j) {
  Violation v;
  v.kind = lookup(kAllViolationKinds, violation_kind_name, j.at("kind").get<std::string>(), "violation kind");
  v.shape = lookup(kAllShapes, shape_name, j.at("shape").get<std::string>(), "shape");
  if (j.contains("color")) v.color = lookup(kAllColors, color_name, j.at("color").get<std::string>(), "color");
  if (j.contains("expected")) v.expected = j.at("expected").get<int>();
  if (j.contains("found")) v.found = j.at("found").get<int>();
  if (j.contains("actual_color")) {
    v.actual_color = lookup(kAllColors, color_name, j.at("actual_color").get<std::string>(), "color");
  }
  if (j.contains("relation")) {
    v.relation = lookup(kAllRelations, relation_phrase, j.at("relation").get<std::string>(), "relation");
  }
  if (j.contains("other")) v.other = lookup(kAllShapes, shape_name, j.at("other").get<std::string>(), "shape");
  return v;
}

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu.ppm", i);
  return buf;
}

// Writes records.jsonl and manifest.json, filling offsets and total.
void write_records(const fs::path& dir, const std::vector<json>& records, DatasetManifest& manifest) {
  std::ofstream os(dir / "records.jsonl", std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + (dir / "records.jsonl").string());
  manifest.offsets.clear();
  std::uint64_t offset = 0;
  for (const auto& r : records) {
    const std::string line = r.dump() + "\n";
    manifest.offsets.push_back(offset);
    offset += line.size();
    os << line;
  }
  if (!os) fail(ErrorKind::kIo, "short write on records.jsonl");
  manifest.total = records.size();
  std::ofstream ms(dir / "manifest.json", std::ios::trunc);
  if (!ms) fail(ErrorKind::kIo, "cannot write " + (dir / "manifest.json").string());
  ms << manifest_to_json(manifest).dump(1) << "\n";
}

std::vector<json> read_records(const fs::path& dir, const DatasetManifest& manifest, const std::string& kind) {
  if (manifest.kind != kind) {
    fail(ErrorKind::kFormat, dir.string() + ": dataset kind is '" + manifest.kind + "', expected '" + kind + "'");
  }
  std::ifstream is(dir / "records.jsonl", std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open " + (dir / "records.jsonl").string());
  std::vector<json> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(is, line)) {
    if (out.size() >= manifest.offsets.size() || manifest.offsets[out.size()] != offset) {
      fail(ErrorKind::kFormat, dir.string() + ": record " + std::to_string(out.size()) + " does not match manifest offsets");
    }
    offset += line.size() + 1;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, dir.string() + ": record " + std::to_string(out.size()) + ": " + e.what());
    }
  }
  if (out.size() != manifest.total) {
    fail(ErrorKind::kFormat, dir.string() + ": " + std::to_string(out.size()) + " records, manifest says " +
                                 std::to_string(manifest.total));
  }
  return out;
}

void prepare(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + (dir / "images").string() + ": " + ec.message());
}

template <class F>
auto guarded(const fs::path& dir, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, dir.string() + ": " + e.what());
  }
}

}  // namespace

json feedback_to_json(const FeedbackRecord& fb) {
  json v = json::array();
  for (const auto& x : fb.violations) v.push_back(violation_to_json(x));
  return {{"text", fb.text}, {"is_null", fb.is_null}, {"violations", v}};
}

FeedbackRecord feedback_from_json(const json& j) {
  FeedbackRecord fb;
  for (const auto& x : j.at("violations")) fb.violations.push_back(violation_from_json(x));
  fb.text = j.at("text").get<std::string>();
  fb.is_null = j.at("is_null").get<bool>();
  if (fb.is_null != fb.violations.empty()) fail(ErrorKind::kFormat, "feedback null flag disagrees with violations");
  return fb;
}

SceneGraph scene_from_json(const json& j) {
  SceneGraph s;
  for (const auto& o : j) {
    SceneObject obj;
    obj.shape = lookup(kAllShapes, shape_name, o.at("shape").get<std::string>(), "shape");
    obj.color = lookup(kAllColors, color_name, o.at("color").get<std::string>(), "color");
    obj.row = o.at("row").get<int>();
    obj.col = o.at("col").get<int>();
    s.objects.push_back(obj);
  }
  if (!s.valid()) fail(ErrorKind::kFormat, "invalid scene: " + j.dump());
  s.canonicalize();
  return s;
}

json manifest_to_json(const DatasetManifest& m) {
  return {{"format", m.format},
          {"kind", m.kind},
          {"pool_hash", m.pool_hash},
          {"eval_pool_hash", m.eval_pool_hash},
          {"generator_checkpoint", m.generator_checkpoint},
          {"total", m.total},
          {"counts", m.counts},
          {"offsets", m.offsets},
          {"extra", m.extra}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.format = j.at("format").get<std::string>();
    if (m.format != kDatasetFormat) {
      fail(ErrorKind::kFormat, "dataset format '" + m.format + "' is not " + std::string(kDatasetFormat));
    }
    m.kind = j.at("kind").get<std::string>();
    m.pool_hash = j.at("pool_hash").get<std::string>();
    m.eval_pool_hash = j.at("eval_pool_hash").get<std::string>();
    m.generator_checkpoint = j.at("generator_checkpoint").get<std::string>();
    m.total = j.at("total").get<std::size_t>();
    m.counts = j.at("counts").get<std::map<std::string, int>>();
    m.offsets = j.at("offsets").get<std::vector<std::uint64_t>>();
    m.extra = j.value("extra", json::object());
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("manifest: ") + e.what());
  }
  std::size_t sum = 0;
  for (const auto& [k, v] : m.counts) sum += static_cast<std::size_t>(v);
  if (sum != m.total || m.offsets.size() != m.total) {
    fail(ErrorKind::kFormat, "manifest counts do not sum to its total");
  }
  return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) fail(ErrorKind::kIo, "cannot open " + (dir / "manifest.json").string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, (dir / "manifest.json").string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

// ---------------------------------------------------------------- pretrain

void write_pretrain_set(const fs::path& dir, const std::vector<PretrainExample>& set, DatasetManifest manifest) {
  prepare(dir);
  manifest.kind = "pretrain";
  std::vector<PromptSpec> prompts;
  std::vector<json> records;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& ex = set[i];
    const std::string name = image_name(i);
    write_ppm((dir / name).string(), ex.image);
    const auto& bg = ex.scene.background;
    records.push_back({{"image", name},
                       {"prompt", prompt_to_json(ex.prompt)},
                       {"scene", scene_to_json(ex.scene)},
                       {"background", {bg[0], bg[1], bg[2]}}});
    prompts.push_back(ex.prompt);
  }
  manifest.counts = category_counts(prompts);
  write_records(dir, records, manifest);
}

std::vector<PretrainExample> read_pretrain_set(const fs::path& dir) {
  const auto manifest = read_manifest(dir);
  return guarded(dir, [&] {
    std::vector<PretrainExample> out;
    for (const auto& r : read_records(dir, manifest, "pretrain")) {
      PretrainExample ex;
      ex.prompt = prompt_from_json(r.at("prompt"));
      ex.scene = scene_from_json(r.at("scene"));
      ex.scene.background = r.at("background").get<std::array<float, 3>>();
      ex.image = read_ppm((dir / r.at("image").get<std::string>()).string());
      out.push_back(std::move(ex));
    }
    return out;
  });
}

// ---------------------------------------------------------------- labeled

void write_labeled_pool(const fs::path& dir, const std::vector<LabeledImage>& pool, DatasetManifest manifest) {
  prepare(dir);
  manifest.kind = "labeled";
  std::vector<PromptSpec> prompts;
  std::vector<json> records;
  int passes = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& rec = pool[i];
    const std::string name = image_name(i);
    write_ppm((dir / name).string(), rec.image);
    records.push_back({{"image", name},
                       {"prompt_id", hex64(rec.prompt.id)},
                       {"category", category_name(rec.prompt.category)},
                       {"text", rec.prompt.text},
                       {"prompt", prompt_to_json(rec.prompt)},
                       {"index", rec.index},
                       {"scene", scene_to_json(detect(rec.image))},
                       {"feedback_text", rec.feedback.text},
                       {"feedback", feedback_to_json(rec.feedback)},
                       {"pass", rec.pass}});
    prompts.push_back(rec.prompt);
    passes += rec.pass;
  }
  manifest.counts = category_counts(prompts);
  manifest.extra["passes"] = passes;
  write_records(dir, records, manifest);
}

std::vector<LabeledImage> read_labeled_pool(const fs::path& dir) {
  const auto manifest = read_manifest(dir);
  return guarded(dir, [&] {
    std::vector<LabeledImage> out;
    for (const auto& r : read_records(dir, manifest, "labeled")) {
      LabeledImage rec;
      rec.prompt = prompt_from_json(r.at("prompt"));
      rec.index = r.at("index").get<int>();
      rec.image = read_ppm((dir / r.at("image").get<std::string>()).string());
      rec.feedback = feedback_from_json(r.at("feedback"));
      rec.pass = r.at("pass").get<bool>();
      out.push_back(std::move(rec));
    }
    return out;
  });
}

// ---------------------------------------------------------------- reflect / sft

namespace {

// Stores each distinct image once and returns its relative path.
class ImageTable {
 public:
  explicit ImageTable(fs::path dir) : dir_(std::move(dir)) {}
  std::string put(const Image& image) {
    const std::uint64_t h = image_hash(image);
    auto it = names_.find(h);
    if (it != names_.end()) return it->second;
    const std::string name = image_name(names_.size());
    write_ppm((dir_ / name).string(), image);
    names_.emplace(h, name);
    return name;
  }

 private:
  fs::path dir_;
  std::unordered_map<std::uint64_t, std::string> names_;
};

}  // namespace

void write_reflect_dataset(const fs::path& dir, const ReflectDataset& ds, DatasetManifest manifest) {
  prepare(dir);
  manifest.kind = "reflect";
  ImageTable table(dir);
  std::vector<PromptSpec> prompts;
  std::vector<json> records;
  for (const auto& ex : ds.examples) {
    json ctx = json::array();
    for (const auto& item : ex.context_pool) {
      ctx.push_back({{"image", table.put(item.image)},
                     {"feedback_text", detokenize(item.feedback)},
                     {"iteration", item.iteration}});
    }
    records.push_back({{"prompt", prompt_to_json(ex.prompt)}, {"good", table.put(ex.good)}, {"context", ctx}});
    prompts.push_back(ex.prompt);
  }
  manifest.counts = category_counts(prompts);
  manifest.extra["prompts_kept"] = ds.prompts_kept;
  manifest.extra["dropped_all_pass"] = ds.dropped_all_pass;
  manifest.extra["dropped_all_fail"] = ds.dropped_all_fail;
  write_records(dir, records, manifest);
}

ReflectDataset read_reflect_dataset(const fs::path& dir) {
  const auto manifest = read_manifest(dir);
  return guarded(dir, [&] {
    ReflectDataset ds;
    std::unordered_map<std::string, Image> cache;
    auto image = [&](const std::string& name) -> const Image& {
      auto it = cache.find(name);
      if (it == cache.end()) it = cache.emplace(name, read_ppm((dir / name).string())).first;
      return it->second;
    };
    for (const auto& r : read_records(dir, manifest, "reflect")) {
      CuratedExample ex;
      ex.prompt = prompt_from_json(r.at("prompt"));
      ex.good = image(r.at("good").get<std::string>());
      for (const auto& c : r.at("context")) {
        ex.context_pool.push_back(
            {image(c.at("image").get<std::string>()), tokenize(c.at("feedback_text").get<std::string>()),
             c.at("iteration").get<int>()});
      }
      if (ex.context_pool.empty()) fail(ErrorKind::kFormat, dir.string() + ": curated example without context");
      ds.examples.push_back(std::move(ex));
    }
    ds.prompts_kept = manifest.extra.value("prompts_kept", 0);
    ds.dropped_all_pass = manifest.extra.value("dropped_all_pass", 0);
    ds.dropped_all_fail = manifest.extra.value("dropped_all_fail", 0);
    return ds;
  });
}

void write_sft_set(const fs::path& dir, const std::vector<SftExample>& set, DatasetManifest manifest) {
  prepare(dir);
  manifest.kind = "sft";
  ImageTable table(dir);
  std::vector<PromptSpec> prompts;
  std::vector<json> records;
  for (const auto& ex : set) {
    records.push_back({{"prompt", prompt_to_json(ex.prompt)}, {"image", table.put(ex.image)}});
    prompts.push_back(ex.prompt);
  }
  manifest.counts = category_counts(prompts);
  write_records(dir, records, manifest);
}

std::vector<SftExample> read_sft_set(const fs::path& dir) {
  const auto manifest = read_manifest(dir);
  return guarded(dir, [&] {
    std::vector<SftExample> out;
    for (const auto& r : read_records(dir, manifest, "sft")) {
      out.push_back({prompt_from_json(r.at("prompt")), read_ppm((dir / r.at("image").get<std::string>()).string())});
    }
    return out;
  });
}

}  // namespace rdit
