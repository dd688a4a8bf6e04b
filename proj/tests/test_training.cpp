// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rdit/error.hpp"
#include "rdit/ops.hpp"
#include "rdit/trainer.hpp"
#include "stubs.hpp"

using namespace rdit;
using namespace rdit::testing;

namespace {

ModelSpec tiny_spec(bool context) {
  ModelSpec s;
  s.dit.width = 16;
  s.dit.depth = 1;
  s.dit.heads = 2;
  s.dit.cond_width = 16;
  if (context) {
    ContextConfig c;
    c.vision_dim = 8;
    c.depth = 1;
    c.heads = 2;
    s.context = c;
  }
  return s;
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::map<std::string, std::vector<float>> snapshot(const ParamStore& store) {
  std::map<std::string, std::vector<float>> out;
  for (const auto& e : store.entries()) out[e.name] = values(e.tensor);
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<PretrainExample> pretrain_set(int n, std::uint64_t seed) {
  SeededRng rng(seed);
  const auto pools = build_prompt_pool(60, 6, rng);
  return build_pretrain_set(pools.train, n, rng);
}

ReflectDataset reflect_set() {
  SeededRng rng(41);
  const auto pools = build_prompt_pool(60, 6, rng);
  SceneGenerator gen({0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  OracleJudge judge;
  return build_reflect_dataset(synthesize_labeled_pool(gen, judge, pools.train, 6, 5, 1));
}

TrainConfig small(TrainKind kind, int steps) {
  TrainConfig c;
  c.kind = kind;
  c.steps = steps;
  c.batch = 4;
  c.lr = 2e-3;
  c.warmup = steps / 4;
  return c;
}

}  // namespace

TEST_CASE("train config json") {
  TrainConfig c = small(TrainKind::kReflect, 40);
  c.freeze_table = true;
  c.time_mode = TimeMode::kWeighted;
  TrainConfig back;
  from_json(nlohmann::json(c), back);
  CHECK(nlohmann::json(back) == nlohmann::json(c));
  CHECK_THROWS_AS(from_json(nlohmann::json{{"bogus", 1}}, back), Error);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"kind", "dpo"}}, back), Error);
  TrainConfig bad;
  bad.warmup = bad.steps + 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = TrainConfig{};
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("pretraining: warmup, first loss and determinism") {
  const auto set = pretrain_set(32, 1);
  const auto examples = examples_from(set);
  TrainConfig c = small(TrainKind::kPretrain, 24);
  c.batch = 64;
  c.warmup = 16;
  ReflectModel model(tiny_spec(false));
  const TrainReport r = train(model, c, examples);
  REQUIRE(r.curve.size() == 24);
  for (const auto& p : r.curve) {
    CHECK(std::isfinite(p.loss));
    if (p.step < c.warmup) CHECK(std::abs(p.lr - c.lr * p.step / c.warmup) < 1e-9);
    else CHECK(p.lr == c.lr);
  }
  // The output head starts at zero, so the first loss is E|eps - x_w|^2 per
  // element, which is 1 + E[x_w^2] for unit Gaussian noise.
  double second_moment = 0.0;
  for (const auto& ex : examples) {
    double s = 0.0;
    for (real v : ex.x_w.data()) s += static_cast<double>(v) * v;
    second_moment += s / static_cast<double>(ex.x_w.numel());
  }
  second_moment /= static_cast<double>(examples.size());
  CHECK(r.curve[0].loss == doctest::Approx(1.0 + second_moment).epsilon(0.03));

  ReflectModel again(tiny_spec(false));
  const TrainReport r2 = train(again, c, examples);
  REQUIRE(r2.curve.size() == r.curve.size());
  for (std::size_t i = 0; i < r.curve.size(); ++i) CHECK(r.curve[i].loss == r2.curve[i].loss);
  CHECK(snapshot(model.params()) == snapshot(again.params()));
}

TEST_CASE("pretraining on a few pairs converges") {
  const auto examples = examples_from(pretrain_set(4, 2));
  TrainConfig c = small(TrainKind::kPretrain, 300);
  c.batch = 8;
  c.cond_dropout = 0.0;
  c.warmup = 20;
  c.log_every = 50;
  ReflectModel model(tiny_spec(false));
  const double before = heldout_loss(model, c, examples, 3);
  train(model, c, examples);
  const double after = heldout_loss(model, c, examples, 3);
  MESSAGE("fixed-draw loss " << before << " -> " << after);
  CHECK(after < 0.5 * before);
}

TEST_CASE("reflection finetuning freezes what it should") {
  const ReflectDataset ds = reflect_set();
  const auto examples = examples_from(ds);
  for (bool freeze_table : {false, true}) {
    ReflectModel model(tiny_spec(true));
    const auto before = snapshot(model.params());
    TrainConfig c = small(TrainKind::kReflect, 8);
    c.freeze_table = freeze_table;
    train(model, c, examples);
    const auto after = snapshot(model.params());
    for (const auto& [name, v] : before) {
      const bool frozen = name.rfind("prompt.", 0) == 0 || name.rfind("ctx.frozen.", 0) == 0 ||
                          (freeze_table && name == "text.embed");
      if (frozen) {
        CHECK_MESSAGE(after.at(name) == v, name);
      } else if (name.rfind("ctx.", 0) == 0 || name == "text.embed" || name.rfind("dit.block0.", 0) == 0) {
        CHECK_MESSAGE(after.at(name) != v, name);
      }
    }
  }
}

TEST_CASE("reflection finetuning rejects misuse") {
  const ReflectDataset ds = reflect_set();
  const auto examples = examples_from(ds);
  ReflectModel model(tiny_spec(true));
  TrainConfig c = small(TrainKind::kReflect, 4);
  c.K = 4;
  try {
    train(model, c, examples);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  ReflectModel base(tiny_spec(false));
  c.K = 3;
  CHECK_THROWS_AS(train(base, c, examples), Error);
  TrainConfig p = small(TrainKind::kPretrain, 4);
  CHECK_THROWS_AS(train(model, p, examples), Error);
  CHECK_THROWS_AS(train(base, p, {}), Error);
}

TEST_CASE("non-finite loss aborts with the step") {
  const auto examples = examples_from(pretrain_set(8, 3));
  ReflectModel model(tiny_spec(false));
  TrainConfig c = small(TrainKind::kPretrain, 50);
  c.lr = 1e30;
  c.warmup = 0;
  c.grad_clip = 0.0;
  try {
    train(model, c, examples);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("run_training writes reproducible checkpoints") {
  const auto dir = scratch_dir("training");
  SeededRng rng(7);
  const auto pools = build_prompt_pool(60, 6, rng);
  DatasetManifest m;
  m.pool_hash = hex64(pool_hash(pools.train));
  write_pretrain_set(dir / "pre", build_pretrain_set(pools.train, 40, rng), m);

  TrainConfig c = small(TrainKind::kPretrain, 12);
  c.dataset = (dir / "pre").string();
  c.heldout_every = 4;
  TrainReport r1, r2;
  {
    ReflectModel model(tiny_spec(false));
    r1 = run_training(model, c, dir / "a.rflt");
  }
  {
    ReflectModel model(tiny_spec(false));
    r2 = run_training(model, c, dir / "b.rflt");
  }
  CHECK(slurp(dir / "a.rflt") == slurp(dir / "b.rflt"));
  CHECK(r1.checkpoint_id == r2.checkpoint_id);
  CHECK(r1.heldout.size() == 4);
  nlohmann::json meta;
  auto loaded = ReflectModel::load(dir / "a.rflt", std::nullopt, &meta);
  CHECK(meta.at("dataset").at("pool_hash") == m.pool_hash);
  CHECK(meta.at("dataset").at("manifest_hash") == hex64(file_hash(dir / "pre" / "manifest.json")));
  CHECK(meta.at("train").at("steps") == 12);

  write_report_csv(dir / "curve.csv", r1);
  const std::string csv = slurp(dir / "curve.csv");
  CHECK(csv.rfind("step,loss,lr,wallclock_ms\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == r1.curve.size() + 1);

  // A reflect run cannot use a pretrain dataset.
  auto reflect = ReflectModel::load(dir / "a.rflt", *tiny_spec(true).context);
  TrainConfig rc = small(TrainKind::kReflect, 2);
  rc.dataset = c.dataset;
  CHECK_THROWS_AS(run_training(*reflect, rc, dir / "r.rflt"), Error);
}

TEST_CASE("sft trains only generator parameters and lowers held-out loss") {
  const ReflectDataset ds = reflect_set();
  auto examples = examples_from(build_sft_set(ds));
  std::vector<TrainExample> train_set, held;
  split_heldout(examples, 0.25, 3, train_set, held);
  CHECK(held.size() == static_cast<std::size_t>(std::lround(0.25 * examples.size())));
  ReflectModel model(tiny_spec(false));
  for (const auto& e : model.params().entries()) CHECK(e.name.rfind("ctx.", 0) != 0);
  TrainConfig c = small(TrainKind::kSft, 60);
  const TrainReport r = train(model, c, train_set, held);
  REQUIRE(r.heldout.size() == 2);
  CHECK(r.heldout.back().loss < r.heldout.front().loss);
}

TEST_CASE("reflection held-out loss drops") {
  const ReflectDataset ds = reflect_set();
  std::vector<TrainExample> train_set, held;
  split_heldout(examples_from(ds), 0.2, 4, train_set, held);
  ReflectModel model(tiny_spec(true));
  TrainConfig c = small(TrainKind::kReflect, 80);
  const TrainReport r = train(model, c, train_set, held);
  REQUIRE(r.heldout.size() == 2);
  MESSAGE("held-out " << r.heldout.front().loss << " -> " << r.heldout.back().loss);
  CHECK(r.heldout.back().loss <= 0.7 * r.heldout.front().loss);
}
