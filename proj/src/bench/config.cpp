// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>

#include "rdit/bench.hpp"
#include "rdit/error.hpp"

namespace rdit {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig::RunConfig() {
  model.width = 64;
  model.depth = 4;
  model.heads = 4;
  model.cond_width = 64;

  pretrain.kind = TrainKind::kPretrain;
  pretrain.steps = 20000;
  pretrain.batch = 32;
  pretrain.lr = 2e-3;
  pretrain.warmup = 500;
  pretrain.log_every = 10;
  pretrain.heldout_every = 1000;

  reflect.kind = TrainKind::kReflect;
  reflect.steps = 3000;
  reflect.batch = 32;
  reflect.lr = 5e-4;
  reflect.warmup = 200;
  reflect.log_every = 10;
  reflect.heldout_every = 500;

  sft = reflect;
  sft.kind = TrainKind::kSft;
}

namespace {

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "unsigned integer";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_number_unsigned()) return v.is_number_unsigned();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    return std::all_of(v.begin(), v.end(), [&](const json& e) { return compatible(def.front(), e); });
  }
  return false;
}

void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) {
    fail(ErrorKind::kConfig, "config key '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  }
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string full = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorKind::kConfig, "unknown config key '" + full + "'");
    json& def = base[it.key()];
    if (def.is_object()) {
      overlay(def, it.value(), full);
    } else if (!compatible(def, it.value())) {
      fail(ErrorKind::kConfig, "config key '" + full + "' expects " + type_name(def) + ", got " +
                                   type_name(it.value()));
    } else {
      def = it.value();
    }
  }
}

json data_json(const DataConfig& d) {
  return {{"n_train", d.n_train},
          {"n_eval", d.n_eval},
          {"pretrain_size", d.pretrain_size},
          {"m_per_prompt", d.m_per_prompt},
          {"judge_noise", d.judge_noise}};
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json j;
  j["out"] = c.out;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["model"] = c.model;
  j["context"] = c.context;
  j["data"] = data_json(c.data);
  j["pretrain"] = c.pretrain;
  j["reflect"] = c.reflect;
  j["sft"] = c.sft;
  j["loop"] = c.loop;
  j["eval"] = {{"budgets", c.eval.budgets},
               {"seeds", c.eval.seeds},
               {"methods", c.eval.methods},
               {"max_prompts", c.eval.max_prompts}};
  j["ablation"] = {{"K", c.ablation.K},
                   {"ct_depth", c.ablation.ct_depth},
                   {"grid", c.ablation.grid},
                   {"seeds", c.ablation.seeds},
                   {"max_prompts", c.ablation.max_prompts}};
  return j;
}

RunConfig config_from_json(const json& user) {
  json merged = config_to_json(RunConfig{});
  overlay(merged, user, "");
  RunConfig c;
  try {
    c.out = merged.at("out").get<std::string>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.jobs = merged.at("jobs").get<int>();
    c.model = merged.at("model").get<DiTConfig>();
    c.context = merged.at("context").get<ContextConfig>();
    const json& d = merged.at("data");
    c.data.n_train = d.at("n_train");
    c.data.n_eval = d.at("n_eval");
    c.data.pretrain_size = d.at("pretrain_size");
    c.data.m_per_prompt = d.at("m_per_prompt");
    c.data.judge_noise = d.at("judge_noise");
    from_json(merged.at("pretrain"), c.pretrain);
    from_json(merged.at("reflect"), c.reflect);
    from_json(merged.at("sft"), c.sft);
    c.loop = merged.at("loop").get<LoopConfig>();
    const json& e = merged.at("eval");
    c.eval.budgets = e.at("budgets").get<std::vector<int>>();
    c.eval.seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
    c.eval.methods = e.at("methods").get<std::vector<std::string>>();
    c.eval.max_prompts = e.at("max_prompts");
    const json& a = merged.at("ablation");
    c.ablation.K = a.at("K").get<std::vector<int>>();
    c.ablation.ct_depth = a.at("ct_depth").get<std::vector<int>>();
    c.ablation.grid = a.at("grid").get<std::vector<int>>();
    c.ablation.seeds = a.at("seeds").get<std::vector<std::uint64_t>>();
    c.ablation.max_prompts = a.at("max_prompts");
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kConfig, what);
  };
  need(!out.empty(), "missing required config key 'out' (or pass --out)");
  need(jobs >= 1, "config key 'jobs' must be at least 1");
  model.validate();
  context.validate(model.image_size / model.patch);
  need(pretrain.kind == TrainKind::kPretrain, "config key 'pretrain.kind' must be pretrain");
  need(reflect.kind == TrainKind::kReflect, "config key 'reflect.kind' must be reflect");
  need(sft.kind == TrainKind::kSft, "config key 'sft.kind' must be sft");
  for (const auto& [name, t] : {std::pair<const char*, const TrainConfig*>{"pretrain", &pretrain},
                                 {"reflect", &reflect},
                                 {"sft", &sft}}) {
    try {
      t->validate();
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, std::string("config section '") + name + "': " + e.what());
    }
  }
  need(reflect.K <= context.max_context, "config key 'reflect.K' exceeds 'context.max_context'");
  loop.validate();
  need(loop.K <= context.max_context, "config key 'loop.K' exceeds 'context.max_context'");
  need(data.n_train >= kNumCategories && data.n_eval >= kNumCategories,
       "config keys 'data.n_train' and 'data.n_eval' must be at least 6");
  need(data.pretrain_size >= 1, "config key 'data.pretrain_size' must be positive");
  need(data.m_per_prompt >= 2, "config key 'data.m_per_prompt' must be at least 2");
  need(data.judge_noise >= 0.0 && data.judge_noise < 0.5, "config key 'data.judge_noise' must lie in [0, 0.5)");
  need(!eval.budgets.empty(), "config key 'eval.budgets' must not be empty");
  for (std::size_t i = 0; i < eval.budgets.size(); ++i) {
    need(eval.budgets[i] >= 1 && (i == 0 || eval.budgets[i] > eval.budgets[i - 1]),
         "config key 'eval.budgets' must be positive and increasing");
  }
  need(!eval.seeds.empty(), "config key 'eval.seeds' must not be empty");
  for (const auto& m : eval.methods) {
    need(std::find(kMethods.begin(), kMethods.end(), m) != kMethods.end(),
         "config key 'eval.methods': unknown method '" + m + "'");
  }
  need(eval.max_prompts >= 0 && ablation.max_prompts >= 0, "max_prompts must be non-negative");
  for (int k : ablation.K) need(k >= 1 && k <= context.max_context, "config key 'ablation.K' out of range");
  for (int d : ablation.ct_depth) need(d >= 1, "config key 'ablation.ct_depth' must be positive");
  const int grid = model.image_size / model.patch;
  for (int g : ablation.grid) {
    need(g >= 1 && grid % g == 0, "config key 'ablation.grid' entries must divide " + std::to_string(grid));
  }
  need(!ablation.seeds.empty(), "config key 'ablation.seeds' must not be empty");
}

RunPaths RunConfig::paths() const {
  RunPaths p;
  p.out = fs::absolute(out).lexically_normal();
  p.pools = p.out / "data" / "pools.json";
  p.pretrain_data = p.out / "data" / "pretrain";
  p.labeled_data = p.out / "data" / "labeled";
  p.reflect_data = p.out / "data" / "reflect";
  p.sft_data = p.out / "data" / "sft";
  p.base_checkpoint = p.out / "ckpt" / "base.rflt";
  p.reflect_checkpoint = p.out / "ckpt" / "reflect.rflt";
  p.sft_checkpoint = p.out / "ckpt" / "sft.rflt";
  p.eval_dir = p.out / "eval";
  p.ablation_dir = p.out / "ablation";
  p.demo_dir = p.out / "demo";
  return p;
}

void resolve_config(RunConfig& c) {
  c.validate();
  const RunPaths p = c.paths();
  c.out = p.out.string();
  if (c.pretrain.dataset.empty()) c.pretrain.dataset = p.pretrain_data.string();
  if (c.reflect.dataset.empty()) c.reflect.dataset = p.reflect_data.string();
  if (c.sft.dataset.empty()) c.sft.dataset = p.sft_data.string();
  for (TrainConfig* t : {&c.pretrain, &c.reflect, &c.sft}) t->dataset = fs::absolute(t->dataset).lexically_normal().string();
}

void echo_config(const RunConfig& c, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << config_to_json(c).dump(2) << "\n";
}

}  // namespace rdit
