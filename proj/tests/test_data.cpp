// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "rdit/bench.hpp"
#include "rdit/data.hpp"
#include "rdit/error.hpp"
#include "stubs.hpp"

using namespace rdit;
using rdit::testing::SceneGenerator;

namespace {

std::set<std::uint64_t> ids_of(const std::vector<PromptSpec>& pool) {
  std::set<std::uint64_t> ids;
  for (const auto& p : pool) ids.insert(p.id);
  return ids;
}

LabeledImage labeled(const PromptSpec& p, int index, bool satisfy, std::uint64_t seed) {
  SeededRng rng(seed, static_cast<std::uint64_t>(index));
  LabeledImage rec;
  rec.prompt = p;
  rec.index = index;
  rec.image = render(sample_scene(p, rng, satisfy));
  rec.feedback = judge_feedback(p, rec.image);
  rec.pass = rec.feedback.is_null;
  return rec;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("prompt pools") {
  SeededRng rng(1);
  const PromptPools pools = build_prompt_pool(2000, 300, rng);
  CHECK(pools.train.size() == 2000);
  CHECK(pools.eval.size() == 300);

  // disjoint by id
  const auto train_ids = ids_of(pools.train);
  for (std::uint64_t id : ids_of(pools.eval)) CHECK(train_ids.count(id) == 0);

  // each category within 2 of the uniform share
  for (const auto* pool : {&pools.train, &pools.eval}) {
    const double share = static_cast<double>(pool->size()) / kNumCategories;
    for (const auto& [name, n] : category_counts(*pool)) CHECK(std::abs(n - share) <= 2.0);
  }

  SeededRng again(1);
  const PromptPools same = build_prompt_pool(2000, 300, again);
  CHECK(pool_hash(same.train) == pool_hash(pools.train));
  CHECK(pool_hash(same.eval) == pool_hash(pools.eval));
  SeededRng other(2);
  CHECK(pool_hash(build_prompt_pool(2000, 300, other).train) != pool_hash(pools.train));

  const PromptPools back = pools_from_json(pools_to_json(pools));
  CHECK(pool_hash(back.train) == pool_hash(pools.train));
  CHECK(pool_hash(back.eval) == pool_hash(pools.eval));

  SeededRng r3(3);
  CHECK_THROWS_AS(build_prompt_pool(5, 300, r3), Error);
  CHECK_THROWS_AS(build_prompt_pool(6, 100000, r3), Error);
}

TEST_CASE("reflect dataset construction") {
  const PromptSpec a = make_single(ShapeKind::kCircle, Color::kRed);
  const PromptSpec b = make_two(ShapeKind::kSquare, ShapeKind::kCross);
  const PromptSpec c = make_position(ShapeKind::kTriangle, Relation::kAbove, ShapeKind::kSquare);
  std::vector<LabeledImage> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(labeled(a, i, true, 1));   // 8/8 pass
  for (int i = 0; i < 8; ++i) pool.push_back(labeled(b, i, false, 2));  // 0/8 pass
  const std::vector<bool> pattern{false, true, false, false, true, false, true, false};
  for (int i = 0; i < 8; ++i) pool.push_back(labeled(c, i, pattern[static_cast<std::size_t>(i)], 3));
  for (const auto& rec : pool) REQUIRE(rec.pass == (rec.prompt.id == a.id || (rec.prompt.id == c.id && pattern[static_cast<std::size_t>(rec.index)])));

  const ReflectDataset ds = build_reflect_dataset(pool);
  CHECK(ds.dropped_all_pass == 1);
  CHECK(ds.dropped_all_fail == 1);
  CHECK(ds.prompts_kept == 1);
  REQUIRE(ds.examples.size() == 3);
  for (const auto& ex : ds.examples) {
    CHECK(ex.prompt.id == c.id);
    CHECK(judge_feedback(c, ex.good).is_null);
    REQUIRE(ex.context_pool.size() == 5);
    for (std::size_t i = 0; i < ex.context_pool.size(); ++i) {
      CHECK_FALSE(judge_feedback(c, ex.context_pool[i].image).is_null);
      if (i) CHECK(ex.context_pool[i - 1].iteration < ex.context_pool[i].iteration);
    }
  }
  CHECK(build_sft_set(ds).size() == 3);

  std::vector<LabeledImage> only_pass(pool.begin(), pool.begin() + 8);
  try {
    build_reflect_dataset(only_pass);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
  }
}

TEST_CASE("draw_training_context") {
  const PromptSpec p = make_counting(3, ShapeKind::kCircle, Color::kBlue);
  CuratedExample ex;
  ex.prompt = p;
  for (int i = 0; i < 5; ++i) ex.context_pool.push_back({Image{}, tokenize("There is no blue circle in the image."), i});

  SeededRng rng(9);
  std::array<int, 4> sizes{};
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const auto ctx = draw_training_context(ex, 3, rng);
    REQUIRE(ctx.size() <= 3);
    ++sizes[ctx.size()];
    for (std::size_t i = 1; i < ctx.size(); ++i) CHECK(ctx[i - 1].iteration < ctx[i].iteration);
  }
  CHECK(std::abs(sizes[0] / double(draws) - 0.1) < 0.01);
  const double nonempty = draws - sizes[0];
  for (int s = 1; s <= 3; ++s) CHECK(std::abs(sizes[static_cast<std::size_t>(s)] / nonempty - 1.0 / 3.0) < 0.03);

  CuratedExample one = ex;
  one.context_pool.resize(1);
  one.context_pool[0].iteration = 7;
  for (int d = 0; d < 100; ++d) {
    const auto ctx = draw_training_context(one, 3, rng, 0.0);
    REQUIRE(ctx.size() == 1);
    CHECK(ctx[0].iteration == 7);
  }
  CHECK_THROWS_AS(draw_training_context(ex, 0, rng), Error);
}

TEST_CASE("labeled pool synthesis") {
  SeededRng rng(4);
  const PromptPools pools = build_prompt_pool(60, 12, rng);
  const std::array<double, kNumCategories> prob{0.9, 0.8, 0.3, 0.6, 0.4, 0.2};
  SceneGenerator gen(prob);
  OracleJudge judge;
  const auto a = synthesize_labeled_pool(gen, judge, pools.train, 4, 77, 1);
  CHECK(a.size() == pools.train.size() * 4);
  CHECK(gen.calls() == a.size());
  CHECK(judge.calls() == a.size());
  for (const auto& rec : a) {
    CHECK_FALSE(rec.feedback.text.empty());
    CHECK(rec.pass == rec.feedback.is_null);
  }

  SceneGenerator gen3(prob);
  const auto b = synthesize_labeled_pool(gen3, judge, pools.train, 4, 77, 3);
  REQUIRE(b.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].index == b[i].index);
  }
}

TEST_CASE("labeled pass rate matches the single-sample eval score") {
  // Same generator behind the labeled pool and the eval harness.
  SeededRng rng(5);
  const PromptPools pools = build_prompt_pool(1200, 60, rng);
  const std::array<double, kNumCategories> prob{0.9, 0.7, 0.3, 0.6, 0.45, 0.2};
  SceneGenerator gen(prob);
  OracleJudge judge;
  const auto labeled_pool = synthesize_labeled_pool(gen, judge, pools.train, 8, 11, 1);
  std::array<double, kNumCategories> pass{}, n{};
  for (const auto& rec : labeled_pool) {
    pass[static_cast<std::size_t>(rec.prompt.category)] += rec.pass;
    n[static_cast<std::size_t>(rec.prompt.category)] += 1;
  }
  EvalOptions opt;
  opt.budgets = {1};
  opt.seeds = {0, 1, 2, 3, 4, 5, 6, 7};
  const EvalReport base = run_eval("base", gen, judge, pools.train, opt);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    INFO("category " << c << " labeled " << pass[c] / n[c] << " eval " << base.curve[0].category[c] << " target " << prob[c]);
    CHECK(std::abs(pass[c] / n[c] - base.curve[0].category[c]) <= 0.05);
  }
}

TEST_CASE("dataset files round trip") {
  const auto dir = rdit::testing::scratch_dir("data_io");
  SeededRng rng(6);
  const PromptPools pools = build_prompt_pool(30, 6, rng);
  DatasetManifest m;
  m.pool_hash = hex64(pool_hash(pools.train));
  m.eval_pool_hash = hex64(pool_hash(pools.eval));

  const auto pre = build_pretrain_set(pools.train, 40, rng);
  write_pretrain_set(dir / "pre", pre, m);
  const auto pre_back = read_pretrain_set(dir / "pre");
  REQUIRE(pre_back.size() == pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    CHECK(pre_back[i].prompt == pre[i].prompt);
    CHECK(pre_back[i].scene == pre[i].scene);
    CHECK(detect(pre_back[i].image) == pre[i].scene);
    CHECK(score_prompt(pre[i].prompt, pre_back[i].image));
  }
  const DatasetManifest mm = read_manifest(dir / "pre");
  CHECK(mm.format == "reflect-ds/1");
  CHECK(mm.kind == "pretrain");
  int total = 0;
  for (const auto& [k, v] : mm.counts) total += v;
  CHECK(static_cast<std::size_t>(total) == mm.total);
  // offsets point at record starts
  const std::string records = slurp(dir / "pre" / "records.jsonl");
  for (std::uint64_t off : mm.offsets) CHECK((off == 0 || records[off - 1] == '\n'));

  // eval prompts never appear in a training manifest
  const auto eval_ids = ids_of(pools.eval);
  for (const auto& ex : pre_back) CHECK(eval_ids.count(ex.prompt.id) == 0);

  // reproducible bytes
  SeededRng r1(8), r2(8);
  write_pretrain_set(dir / "p1", build_pretrain_set(pools.train, 20, r1), m);
  write_pretrain_set(dir / "p2", build_pretrain_set(pools.train, 20, r2), m);
  CHECK(slurp(dir / "p1" / "manifest.json") == slurp(dir / "p2" / "manifest.json"));
  CHECK(slurp(dir / "p1" / "records.jsonl") == slurp(dir / "p2" / "records.jsonl"));

  SceneGenerator gen({0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  OracleJudge judge;
  const auto lab = synthesize_labeled_pool(gen, judge, pools.train, 6, 3, 1);
  write_labeled_pool(dir / "lab", lab, m);
  const auto lab_back = read_labeled_pool(dir / "lab");
  REQUIRE(lab_back.size() == lab.size());
  for (std::size_t i = 0; i < lab.size(); ++i) {
    CHECK(lab_back[i].image == lab[i].image);
    CHECK(lab_back[i].pass == lab[i].pass);
    CHECK(lab_back[i].feedback.text == lab[i].feedback.text);
    CHECK(lab_back[i].feedback.violations == lab[i].feedback.violations);
    CHECK(judge_feedback(lab_back[i].prompt, lab_back[i].image).is_null == lab[i].pass);
  }

  const ReflectDataset ds = build_reflect_dataset(lab_back);
  write_reflect_dataset(dir / "ref", ds, m);
  const ReflectDataset ds_back = read_reflect_dataset(dir / "ref");
  REQUIRE(ds_back.examples.size() == ds.examples.size());
  CHECK(ds_back.dropped_all_fail == ds.dropped_all_fail);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(ds_back.examples[i].good == ds.examples[i].good);
    REQUIRE(ds_back.examples[i].context_pool.size() == ds.examples[i].context_pool.size());
    for (std::size_t j = 0; j < ds.examples[i].context_pool.size(); ++j) {
      CHECK(ds_back.examples[i].context_pool[j].image == ds.examples[i].context_pool[j].image);
      CHECK(ds_back.examples[i].context_pool[j].feedback == ds.examples[i].context_pool[j].feedback);
      CHECK(ds_back.examples[i].context_pool[j].iteration == ds.examples[i].context_pool[j].iteration);
    }
  }
  write_sft_set(dir / "sft", build_sft_set(ds), m);
  CHECK(read_sft_set(dir / "sft").size() == ds.examples.size());

  // kind and format checks
  CHECK_THROWS_AS(read_sft_set(dir / "ref"), Error);
  {
    std::ofstream os(dir / "ref" / "manifest.json");
    os << R"({"format": "reflect-ds/0"})";
  }
  try {
    read_reflect_dataset(dir / "ref");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
  }
}

TEST_CASE("feedback and scene json") {
  Violation v;
  v.kind = ViolationKind::kCount;
  v.shape = ShapeKind::kCross;
  v.color = Color::kGreen;
  v.expected = 3;
  v.found = 1;
  Violation w;
  w.kind = ViolationKind::kPosition;
  w.shape = ShapeKind::kCircle;
  w.relation = Relation::kBelow;
  w.other = ShapeKind::kTriangle;
  const FeedbackRecord fb = make_feedback({v, w});
  const FeedbackRecord back = feedback_from_json(feedback_to_json(fb));
  CHECK(back.violations == fb.violations);
  CHECK(back.text == fb.text);
  CHECK_FALSE(back.is_null);

  SeededRng rng(12);
  for (int i = 0; i < 50; ++i) {
    const SceneGraph s = random_scene(rng);
    SceneGraph t = scene_from_json(scene_to_json(s));
    t.background = s.background;
    CHECK(t == s);
  }
  CHECK_THROWS_AS(scene_from_json(nlohmann::json::parse(R"([{"shape":"hexagon","color":"red","row":0,"col":0}])")),
                  Error);
}
