// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <mutex>

#include "rdit/bench.hpp"
#include "rdit/error.hpp"

namespace rdit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << j.dump(1) << "\n";
}

void require_file(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) fail(ErrorKind::kState, path.string() + " not found; run '" + stage + "' first");
}

std::function<void(const TrainPoint&)> train_logger(const Logger& log, int steps) {
  const int every = std::max(1, steps / 50);
  return [log, every](const TrainPoint& p) {
    if (p.step % every == 0) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "step %lld loss %.4f lr %.2e %.0fs", static_cast<long long>(p.step), p.loss,
                    p.lr, p.wallclock_ms / 1000.0);
      log(buf);
    }
  };
}

void log_heldout(const Logger& log, const TrainReport& r) {
  for (const auto& h : r.heldout) log("held-out loss at step " + std::to_string(h.step) + ": " + pct(h.loss));
}

std::unique_ptr<ReflectModel> load_checked(const fs::path& path, const RunConfig& c,
                                           std::optional<ContextConfig> context = std::nullopt) {
  auto model = ReflectModel::load(path, context);
  DiTConfig want = c.model;
  if (want.vocab_size == 0) want.vocab_size = static_cast<int>(vocabulary_size());
  DiTConfig have = model->spec().dit;
  if (have.vocab_size == 0) have.vocab_size = static_cast<int>(vocabulary_size());
  if (!(have == want)) {
    fail(ErrorKind::kConfig, path.string() + ": model configuration differs from the run config");
  }
  return model;
}

// Balanced prefix of the eval pool: the first max/6 prompts of each category.
std::vector<PromptSpec> subset_pool(const std::vector<PromptSpec>& pool, int max_prompts) {
  if (max_prompts <= 0 || static_cast<std::size_t>(max_prompts) >= pool.size()) return pool;
  const int per = std::max(1, max_prompts / kNumCategories);
  std::array<int, kNumCategories> taken{};
  std::vector<PromptSpec> out;
  for (const auto& p : pool) {
    if (taken[static_cast<std::size_t>(p.category)]++ < per) out.push_back(p);
  }
  return out;
}

EvalReport eval_model(const RunConfig& c, const ReflectModel& model, const std::string& method, int K,
                      const std::vector<PromptSpec>& pool, const std::vector<std::uint64_t>& seeds,
                      const fs::path& outcomes_path, const Logger& log) {
  ModelGenerator gen(model, c.loop.sampler);
  auto judge = make_judge(c, 0xe7a1);
  EvalOptions opt;
  opt.budgets = c.eval.budgets;
  opt.seeds = seeds;
  opt.K = K;
  opt.jobs = c.jobs;
  fs::create_directories(outcomes_path.parent_path());
  std::ofstream os(outcomes_path, std::ios::trunc);
  std::mutex mu;
  std::size_t done = 0;
  const std::size_t total = pool.size() * seeds.size();
  opt.on_outcome = [&](const PromptOutcome& o) {
    std::lock_guard lock(mu);
    os << json{{"seed", o.seed}, {"prompt", o.prompt_index}, {"images", o.images}, {"pass", o.pass}}.dump() << "\n";
    if (++done % 100 == 0) log(method + ": " + std::to_string(done) + "/" + std::to_string(total) + " prompts");
  };
  EvalReport r = run_eval(method, gen, *judge, pool, opt);
  const auto& last = r.curve.back();
  log(method + " overall@" + std::to_string(last.budget) + " = " + pct(last.overall) + " (first budget " +
      pct(r.curve.front().overall) + ")");
  return r;
}

}  // namespace

std::unique_ptr<Judge> make_judge(const RunConfig& c, std::uint64_t salt) {
  if (c.data.judge_noise > 0.0) return std::make_unique<NoisyJudge>(c.data.judge_noise, c.seed ^ splitmix64(salt));
  return std::make_unique<OracleJudge>();
}

PromptPools load_pools(const RunConfig& c) {
  const fs::path path = c.paths().pools;
  require_file(path, "gen-data");
  std::ifstream is(path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  return pools_from_json(j);
}

void stage_gen_data(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  SeededRng rng(c.seed, 0xda7a);
  const PromptPools pools = build_prompt_pool(c.data.n_train, c.data.n_eval, rng);
  write_json(p.pools, pools_to_json(pools));
  log("pools: " + std::to_string(pools.train.size()) + " train, " + std::to_string(pools.eval.size()) + " eval");
  SeededRng render_rng(c.seed, 0x9e7a);
  const auto set = build_pretrain_set(pools.train, c.data.pretrain_size, render_rng);
  DatasetManifest m;
  m.pool_hash = hex64(pool_hash(pools.train));
  m.eval_pool_hash = hex64(pool_hash(pools.eval));
  write_pretrain_set(p.pretrain_data, set, m);
  log("pretrain set: " + std::to_string(set.size()) + " renders in " + p.pretrain_data.string());
}

TrainReport stage_pretrain(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  require_file(p.pretrain_data / "manifest.json", "gen-data");
  ReflectModel model(c.base_spec());
  log("base model: " + std::to_string(model.params().parameter_count()) + " parameters");
  TrainReport r = run_training(model, c.pretrain, p.base_checkpoint, "", train_logger(log, c.pretrain.steps));
  fs::create_directories(p.out / "reports");
  write_report_csv(p.out / "reports" / "pretrain.csv", r);
  log_heldout(log, r);
  log("checkpoint " + p.base_checkpoint.string() + " id " + r.checkpoint_id);
  return r;
}

void stage_curate(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  require_file(p.base_checkpoint, "pretrain");
  const PromptPools pools = load_pools(c);
  auto model = load_checked(p.base_checkpoint, c);
  ModelGenerator gen(*model, c.loop.sampler);
  auto judge = make_judge(c, 0xc0a7);
  const auto labeled =
      synthesize_labeled_pool(gen, *judge, pools.train, c.data.m_per_prompt, splitmix64(c.seed ^ 0xc0a7), c.jobs);

  DatasetManifest m;
  m.pool_hash = hex64(pool_hash(pools.train));
  m.eval_pool_hash = hex64(pool_hash(pools.eval));
  m.generator_checkpoint = checkpoint_id(p.base_checkpoint);
  write_labeled_pool(p.labeled_data, labeled, m);

  std::array<int, kNumCategories> n{}, pass{};
  for (const auto& rec : labeled) {
    ++n[static_cast<std::size_t>(rec.prompt.category)];
    pass[static_cast<std::size_t>(rec.prompt.category)] += rec.pass;
  }
  for (Category cat : kAllCategories) {
    const auto i = static_cast<std::size_t>(cat);
    log("labeled " + std::string(category_name(cat)) + ": pass rate " + pct(n[i] ? double(pass[i]) / n[i] : 0.0));
  }

  const ReflectDataset ds = build_reflect_dataset(labeled);
  write_reflect_dataset(p.reflect_data, ds, m);
  log("reflect set: " + std::to_string(ds.examples.size()) + " examples from " + std::to_string(ds.prompts_kept) +
      " prompts (dropped " + std::to_string(ds.dropped_all_pass) + " all-pass, " +
      std::to_string(ds.dropped_all_fail) + " all-fail)");
  const auto sft = build_sft_set(ds);
  write_sft_set(p.sft_data, sft, m);
  log("sft set: " + std::to_string(sft.size()) + " examples");
}

TrainReport stage_train_reflect(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  require_file(p.base_checkpoint, "pretrain");
  require_file(p.reflect_data / "manifest.json", "curate");
  auto model = load_checked(p.base_checkpoint, c, c.context);
  TrainReport r = run_training(*model, c.reflect, p.reflect_checkpoint, checkpoint_id(p.base_checkpoint),
                               train_logger(log, c.reflect.steps));
  fs::create_directories(p.out / "reports");
  write_report_csv(p.out / "reports" / "reflect.csv", r);
  log_heldout(log, r);
  log("checkpoint " + p.reflect_checkpoint.string() + " id " + r.checkpoint_id);
  return r;
}

TrainReport stage_train_sft(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  require_file(p.base_checkpoint, "pretrain");
  require_file(p.sft_data / "manifest.json", "curate");
  auto model = load_checked(p.base_checkpoint, c);
  TrainReport r = run_training(*model, c.sft, p.sft_checkpoint, checkpoint_id(p.base_checkpoint),
                               train_logger(log, c.sft.steps));
  fs::create_directories(p.out / "reports");
  write_report_csv(p.out / "reports" / "sft.csv", r);
  log_heldout(log, r);
  log("checkpoint " + p.sft_checkpoint.string() + " id " + r.checkpoint_id);
  return r;
}

std::vector<EvalReport> stage_eval(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  const auto pool = subset_pool(load_pools(c).eval, c.eval.max_prompts);
  log("eval pool: " + std::to_string(pool.size()) + " prompts, " + std::to_string(c.eval.seeds.size()) + " seeds");
  std::vector<EvalReport> reports;
  for (const auto& method : c.eval.methods) {
    fs::path ckpt = p.base_checkpoint;
    std::string stage = "pretrain";
    if (method == "sft+bestofn") {
      ckpt = p.sft_checkpoint;
      stage = "train-sft";
    } else if (method == "reflect") {
      ckpt = p.reflect_checkpoint;
      stage = "train-reflect";
    }
    require_file(ckpt, stage);
    auto model = load_checked(ckpt, c);
    reports.push_back(
        eval_model(c, *model, method, c.loop.K, pool, c.eval.seeds, p.eval_dir / ("outcomes_" + method + ".jsonl"), log));
  }
  emit_report(reports, p.eval_dir, "eval", "overall score vs samples per prompt");
  log("reports in " + p.eval_dir.string());
  return reports;
}

namespace {

struct Variant {
  std::string sweep;
  std::string name;
  int K;
  ContextConfig context;
};

}  // namespace

std::vector<EvalReport> stage_ablate(const RunConfig& c, const Logger& log) {
  const RunPaths p = c.paths();
  require_file(p.base_checkpoint, "pretrain");
  require_file(p.reflect_data / "manifest.json", "curate");
  const int feature_grid = c.model.image_size / c.model.patch;
  std::vector<Variant> variants;
  for (int k : c.ablation.K) variants.push_back({"K", "K=" + std::to_string(k), k, c.context});
  for (int d : c.ablation.ct_depth) {
    ContextConfig cc = c.context;
    cc.depth = d;
    variants.push_back({"depth", "depth=" + std::to_string(d), c.reflect.K, cc});
  }
  for (int g : c.ablation.grid) {
    ContextConfig cc = c.context;
    cc.pool_window = feature_grid / g;
    variants.push_back({"grid", "grid=" + std::to_string(g) + "x" + std::to_string(g), c.reflect.K, cc});
  }

  const auto pool = subset_pool(load_pools(c).eval, c.ablation.max_prompts);
  const std::string base_id = checkpoint_id(p.base_checkpoint);
  std::map<std::string, EvalReport> done;  // by training signature
  std::vector<EvalReport> all;
  std::map<std::string, std::vector<EvalReport>> by_sweep;
  for (const auto& v : variants) {
    TrainConfig tc = c.reflect;
    tc.K = v.K;
    const json signature = {{"train", tc}, {"context", v.context}};
    const std::string sig = signature.dump();
    EvalReport r;
    if (auto it = done.find(sig); it != done.end()) {
      r = it->second;
    } else {
      const fs::path dir = p.ablation_dir / ("v" + hex64(fnv1a64(sig)).substr(0, 8));
      fs::path ckpt = dir / "reflect.rflt";
      auto matches = [&](const fs::path& path) {
        if (!fs::exists(path)) return false;
        const Checkpoint existing = load_checkpoint(path);
        return existing.meta.value("train", json()) == json(tc) &&
               existing.meta.value("base_checkpoint", "") == base_id &&
               existing.meta.at("model").value("context", json()) == json(v.context);
      };
      bool reuse = matches(ckpt);
      if (!reuse && matches(p.reflect_checkpoint)) {
        ckpt = p.reflect_checkpoint;
        reuse = true;
      }
      fs::create_directories(dir);
      if (reuse) {
        log(v.name + ": reusing " + ckpt.string());
      } else {
        log(v.name + ": training");
        auto model = load_checked(p.base_checkpoint, c, v.context);
        const TrainReport tr = run_training(*model, tc, ckpt, base_id, train_logger(log, tc.steps));
        write_report_csv(dir / "train.csv", tr);
        log_heldout(log, tr);
      }
      auto model = ReflectModel::load(ckpt);
      r = eval_model(c, *model, "reflect", v.K, pool, c.ablation.seeds, dir / "outcomes.jsonl", log);
      done.emplace(sig, r);
    }
    r.variant = v.name;
    by_sweep[v.sweep].push_back(r);
    all.push_back(r);
  }
  const std::map<std::string, std::string> titles{{"K", "context size K"},
                                                  {"depth", "context transformer depth"},
                                                  {"grid", "pooled image grid"}};
  for (const auto& [sweep, reports] : by_sweep) {
    emit_report(reports, p.ablation_dir, "ablation_" + sweep, titles.at(sweep));
  }
  emit_report(all, p.ablation_dir, "ablation_all", "ablations");
  log("ablation reports in " + p.ablation_dir.string());
  return all;
}

Trajectory stage_loop_demo(const RunConfig& c, std::size_t prompt_index, const Logger& log) {
  const RunPaths p = c.paths();
  require_file(p.reflect_checkpoint, "train-reflect");
  const auto pools = load_pools(c);
  if (prompt_index >= pools.eval.size()) {
    fail(ErrorKind::kConfig, "prompt index " + std::to_string(prompt_index) + " outside the eval pool of " +
                                 std::to_string(pools.eval.size()));
  }
  auto model = load_checked(p.reflect_checkpoint, c);
  ModelGenerator gen(*model, c.loop.sampler);
  auto judge = make_judge(c, 0xe7a1);
  const PromptSpec& prompt = pools.eval[prompt_index];
  const Trajectory t = reflect_loop(prompt, gen, *judge, c.loop, SeededRng(c.loop.seed, 0xe7a1).split(prompt_index));
  const fs::path dir = p.demo_dir / ("prompt_" + std::to_string(prompt_index));
  dump_trajectory(dir, t);
  log("\"" + prompt.text + "\": " + std::to_string(t.steps.size()) + " images, " +
      std::string(stop_reason_name(t.reason)) + ", selected " + std::to_string(t.selected));
  for (std::size_t i = 0; i < t.steps.size(); ++i) log("  " + std::to_string(i) + ": " + t.steps[i].feedback.text);
  log("trajectory in " + dir.string());
  return t;
}

}  // namespace rdit
