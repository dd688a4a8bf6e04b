// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "rdit/error.hpp"
#include "rdit/ops.hpp"
#include "rdit/optim.hpp"

namespace rdit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view train_kind_name(TrainKind k) {
  switch (k) {
    case TrainKind::kPretrain: return "pretrain";
    case TrainKind::kReflect: return "reflect";
    case TrainKind::kSft: return "sft";
  }
  return "?";
}

TrainKind parse_train_kind(std::string_view s) {
  for (TrainKind k : {TrainKind::kPretrain, TrainKind::kReflect, TrainKind::kSft}) {
    if (train_kind_name(k) == s) return k;
  }
  fail(ErrorKind::kConfig, "unknown training kind '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kConfig, "train config: " + what);
  };
  need(steps >= 1, "steps must be at least 1");
  need(batch >= 1, "batch must be at least 1");
  need(warmup >= 0 && warmup <= steps, "warmup must lie in [0, steps]");
  need(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  need(K >= 1, "K must be at least 1");
  need(cond_dropout >= 0.0 && cond_dropout < 1.0, "cond_dropout must lie in [0, 1)");
  need(empty_context_prob >= 0.0 && empty_context_prob <= 1.0, "empty_context_prob must lie in [0, 1]");
  need(grad_clip >= 0.0, "grad_clip must be non-negative (0 disables)");
  need(log_every >= 1, "log_every must be at least 1");
  need(heldout_every >= 0, "heldout_every must be non-negative");
  need(heldout_fraction >= 0.0 && heldout_fraction < 1.0, "heldout_fraction must lie in [0, 1)");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"kind", train_kind_name(c.kind)},
           {"steps", c.steps},
           {"batch", c.batch},
           {"lr", c.lr},
           {"warmup", c.warmup},
           {"seed", c.seed},
           {"dataset", c.dataset},
           {"K", c.K},
           {"cond_dropout", c.cond_dropout},
           {"empty_context_prob", c.empty_context_prob},
           {"grad_clip", c.grad_clip},
           {"weight_decay", c.weight_decay},
           {"freeze_prompt", c.freeze_prompt},
           {"freeze_table", c.freeze_table},
           {"time_mode", c.time_mode == TimeMode::kSample ? "sample" : "weighted"},
           {"log_every", c.log_every},
           {"heldout_every", c.heldout_every},
           {"heldout_fraction", c.heldout_fraction}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "train config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "kind") c.kind = parse_train_kind(v.get<std::string>());
      else if (k == "steps") c.steps = v.get<int>();
      else if (k == "batch") c.batch = v.get<int>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "warmup") c.warmup = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "dataset") c.dataset = v.get<std::string>();
      else if (k == "K") c.K = v.get<int>();
      else if (k == "cond_dropout") c.cond_dropout = v.get<double>();
      else if (k == "empty_context_prob") c.empty_context_prob = v.get<double>();
      else if (k == "grad_clip") c.grad_clip = v.get<double>();
      else if (k == "weight_decay") c.weight_decay = v.get<double>();
      else if (k == "freeze_prompt") c.freeze_prompt = v.get<bool>();
      else if (k == "freeze_table") c.freeze_table = v.get<bool>();
      else if (k == "time_mode") {
        const auto s = v.get<std::string>();
        if (s == "sample") c.time_mode = TimeMode::kSample;
        else if (s == "weighted") c.time_mode = TimeMode::kWeighted;
        else fail(ErrorKind::kConfig, "time_mode must be 'sample' or 'weighted', got '" + s + "'");
      } else if (k == "log_every") c.log_every = v.get<int>();
      else if (k == "heldout_every") c.heldout_every = v.get<int>();
      else if (k == "heldout_fraction") c.heldout_fraction = v.get<double>();
      else fail(ErrorKind::kConfig, "unknown train config key '" + k + "'");
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfig, "train config key '" + k + "': " + e.what());
    }
  }
}

void write_report_csv(const fs::path& path, const TrainReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << "step,loss,lr,wallclock_ms\n";
  char buf[128];
  for (const auto& p : report.curve) {
    std::snprintf(buf, sizeof buf, "%lld,%.8g,%.8g,%.1f\n", static_cast<long long>(p.step), p.loss, p.lr,
                  p.wallclock_ms);
    os << buf;
  }
  if (!os) fail(ErrorKind::kIo, "short write on " + path.string());
}

std::vector<TrainExample> examples_from(const std::vector<PretrainExample>& set) {
  std::vector<TrainExample> out;
  out.reserve(set.size());
  for (const auto& ex : set) out.push_back({tokenize(ex.prompt.text), image_to_tensor(ex.image), nullptr});
  return out;
}

std::vector<TrainExample> examples_from(const std::vector<SftExample>& set) {
  std::vector<TrainExample> out;
  out.reserve(set.size());
  for (const auto& ex : set) out.push_back({tokenize(ex.prompt.text), image_to_tensor(ex.image), nullptr});
  return out;
}

std::vector<TrainExample> examples_from(const ReflectDataset& ds) {
  std::vector<TrainExample> out;
  out.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) out.push_back({tokenize(ex.prompt.text), image_to_tensor(ex.good), &ex});
  return out;
}

namespace {

// Loss of one example under an rng stream. Draw order: dropout, context,
// flow sample.
Tensor example_loss(const ReflectModel& model, const TrainConfig& c, const TrainExample& ex, SeededRng& rng) {
  const DiT& dit = model.dit();
  const bool dropped = rng.bernoulli(c.cond_dropout);
  std::vector<ContextItem> context;
  if (c.kind == TrainKind::kReflect) {
    if (!ex.curated) fail(ErrorKind::kData, "reflection example without a context pool");
    context = draw_training_context(*ex.curated, c.K, rng, c.empty_context_prob);
  }
  const ConditioningBundle cond =
      dropped ? dit.null_conditioning()
              : model.condition(ex.prompt, context, c.kind == TrainKind::kReflect && c.freeze_prompt);
  const VelocityFn f = [&](const Tensor& x, double t) { return dit.forward(x, t, cond); };
  return flow_loss(f, ex.x_w, rng, c.time_mode);
}

void check_model(const ReflectModel& model, const TrainConfig& c) {
  if (c.kind == TrainKind::kReflect) {
    if (!model.has_context()) fail(ErrorKind::kConfig, "reflection training needs a model with a context encoder");
    if (c.K > model.spec().context->max_context) {
      fail(ErrorKind::kConfig, "K=" + std::to_string(c.K) + " exceeds the model's context capacity " +
                                   std::to_string(model.spec().context->max_context));
    }
  } else if (model.has_context()) {
    fail(ErrorKind::kConfig, std::string(train_kind_name(c.kind)) + " training takes a model without context encoder");
  }
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (real g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<real>(max_norm / norm);
    for (auto p : params) {
      for (real& g : p.grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace

double heldout_loss(const ReflectModel& model, const TrainConfig& config, std::span<const TrainExample> examples,
                    std::uint64_t seed) {
  if (examples.empty()) return std::nan("");
  NoGradGuard no_grad;
  TrainConfig c = config;
  c.cond_dropout = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    SeededRng rng = SeededRng(seed, 0x4e1d).split(i);
    total += static_cast<double>(example_loss(model, c, examples[i], rng).item());
  }
  return total / static_cast<double>(examples.size());
}

TrainReport train(ReflectModel& model, const TrainConfig& config, std::span<const TrainExample> train_set,
                  std::span<const TrainExample> heldout_set, const std::function<void(const TrainPoint&)>& on_log) {
  config.validate();
  check_model(model, config);
  if (train_set.empty()) fail(ErrorKind::kData, "empty training set");

  ParamStore& store = model.params();
  if (config.kind == TrainKind::kReflect) {
    if (config.freeze_prompt) store.set_trainable("prompt.", false);
    if (config.freeze_table) store.set_trainable("text.embed", false);
  }
  const std::vector<Tensor> params = store.trainable();
  AdamWConfig opt_config;
  opt_config.lr = config.lr;
  opt_config.weight_decay = config.weight_decay;
  AdamW opt(params, opt_config);

  TrainReport report;
  report.config = config;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  auto eval_heldout = [&](std::int64_t step) {
    if (heldout_set.empty()) return;
    report.heldout.push_back({step, heldout_loss(model, config, heldout_set, config.seed)});
  };

  eval_heldout(0);
  const SeededRng root(config.seed, 0x7a1e);
  const double inv_batch = 1.0 / config.batch;
  for (int step = 0; step < config.steps; ++step) {
    const SeededRng step_rng = root.split(static_cast<std::uint64_t>(step));
    opt.zero_grad();
    double loss_sum = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      SeededRng rng = step_rng.split(static_cast<std::uint64_t>(b));
      const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train_set.size()) - 1));
      const Tensor loss = example_loss(model, config, train_set[idx], rng);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        active_tape().clear();
        fail(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(step));
      }
      loss_sum += value;
      backward(ops::scale(loss, inv_batch));
    }
    clip_gradients(params, config.grad_clip);
    const double lr = warmup_lr(config.lr, step, config.warmup);
    try {
      opt.step(lr);
    } catch (const Error& e) {
      fail(e.kind(), "step " + std::to_string(step) + ": " + e.what());
    }
    if (step % config.log_every == 0 || step + 1 == config.steps) {
      TrainPoint p{step, loss_sum * inv_batch, lr, elapsed_ms()};
      report.curve.push_back(p);
      if (on_log) on_log(p);
    }
    if (config.heldout_every > 0 && (step + 1) % config.heldout_every == 0 && step + 1 != config.steps) {
      eval_heldout(step + 1);
    }
  }
  eval_heldout(config.steps);
  opt.zero_grad();
  report.wallclock_ms = elapsed_ms();
  return report;
}

void split_heldout(std::vector<TrainExample> all, double fraction, std::uint64_t seed,
                   std::vector<TrainExample>& train_out, std::vector<TrainExample>& heldout_out) {
  train_out.clear();
  heldout_out.clear();
  if (fraction <= 0.0 || all.size() < 2) {
    train_out = std::move(all);
    return;
  }
  auto n_hold = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(all.size())));
  n_hold = std::clamp<std::size_t>(n_hold, 1, all.size() - 1);
  SeededRng rng(seed, 0x5b17);
  const auto picks = rng.sample_without_replacement(all.size(), n_hold);
  std::size_t next = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (next < picks.size() && picks[next] == i) {
      heldout_out.push_back(std::move(all[i]));
      ++next;
    } else {
      train_out.push_back(std::move(all[i]));
    }
  }
}

std::string checkpoint_id(const fs::path& checkpoint) { return hex64(file_hash(checkpoint)); }

TrainReport run_training(ReflectModel& model, const TrainConfig& config, const fs::path& checkpoint,
                         const std::string& base_checkpoint_id, const std::function<void(const TrainPoint&)>& on_log) {
  config.validate();
  const fs::path dir = config.dataset;
  const DatasetManifest manifest = read_manifest(dir);
  const std::string expected = config.kind == TrainKind::kPretrain ? "pretrain"
                               : config.kind == TrainKind::kReflect ? "reflect"
                                                                    : "sft";
  if (manifest.kind != expected) {
    fail(ErrorKind::kConfig, dir.string() + " holds a " + manifest.kind + " dataset, " + expected + " training needs " +
                                 expected);
  }
  check_model(model, config);

  ReflectDataset reflect;
  std::vector<TrainExample> all;
  switch (config.kind) {
    case TrainKind::kPretrain: all = examples_from(read_pretrain_set(dir)); break;
    case TrainKind::kSft: all = examples_from(read_sft_set(dir)); break;
    case TrainKind::kReflect:
      reflect = read_reflect_dataset(dir);
      all = examples_from(reflect);
      break;
  }
  std::vector<TrainExample> train_set, heldout_set;
  split_heldout(std::move(all), config.heldout_fraction, config.seed, train_set, heldout_set);
  TrainReport report = train(model, config, train_set, heldout_set, on_log);

  json meta;
  meta["train"] = config;
  meta["dataset"] = {{"path", dir.string()},
                     {"kind", manifest.kind},
                     {"manifest_hash", hex64(file_hash(dir / "manifest.json"))},
                     {"records_hash", hex64(file_hash(dir / "records.jsonl"))},
                     {"pool_hash", manifest.pool_hash},
                     {"eval_pool_hash", manifest.eval_pool_hash}};
  meta["base_checkpoint"] = base_checkpoint_id;
  json held = json::array();
  for (const auto& h : report.heldout) held.push_back({h.step, h.loss});
  meta["heldout"] = held;
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  model.save(checkpoint, meta);
  report.checkpoint_id = checkpoint_id(checkpoint);
  return report;
}

}  // namespace rdit
