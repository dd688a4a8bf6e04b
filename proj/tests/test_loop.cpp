// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>

#include "doctest.h"
#include "rdit/data.hpp"
#include "rdit/error.hpp"
#include "rdit/reflect_loop.hpp"
#include "stubs.hpp"

using namespace rdit;
using namespace rdit::testing;

namespace {

constexpr std::array<double, kNumCategories> kHalf{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};

// Returns violation counts from a script, cycling.
class ScriptedJudge : public Judge {
 public:
  explicit ScriptedJudge(std::vector<int> counts) : counts_(std::move(counts)) {}

 protected:
  FeedbackRecord do_judge(const PromptSpec& prompt, const Image&) override {
    const int n = counts_[next_++ % counts_.size()];
    Violation v;
    v.kind = ViolationKind::kMissing;
    v.shape = prompt.shape_a;
    FeedbackRecord fb = make_feedback(std::vector<Violation>(static_cast<std::size_t>(n), v));
    fb.violations.assign(static_cast<std::size_t>(n), v);  // uncapped for selection tests
    fb.is_null = n == 0;
    return fb;
  }

 private:
  std::vector<int> counts_;
  std::size_t next_ = 0;
};

Trajectory scripted(const std::vector<int>& counts) {
  Trajectory t;
  for (int n : counts) {
    TrajectoryStep s;
    Violation v;
    s.feedback = make_feedback(std::vector<Violation>(static_cast<std::size_t>(n), v));
    s.feedback.violations.assign(static_cast<std::size_t>(n), v);
    s.feedback.is_null = n == 0;
    t.steps.push_back(s);
  }
  t.reason = counts.back() == 0 ? StopReason::kNullFeedback : StopReason::kBudget;
  return t;
}

std::vector<PromptSpec> some_prompts(int n) {
  SeededRng rng(21);
  return build_prompt_pool(n, 6, rng).train;
}

}  // namespace

TEST_CASE("loop stops at the first pass") {
  SceneGenerator gen(kHalf, true);
  AlwaysPassJudge judge;
  LoopConfig cfg;
  for (const auto& p : some_prompts(30)) {
    const Trajectory t = reflect_loop(p, gen, judge, cfg, SeededRng(1, p.id));
    CHECK(t.steps.size() == 1);
    CHECK(t.reason == StopReason::kNullFeedback);
    CHECK(t.selected == 0);
  }
}

TEST_CASE("loop runs out its budget") {
  SceneGenerator gen(kHalf, true);
  AlwaysFailJudge judge;
  LoopConfig cfg;
  cfg.N = 7;
  const PromptSpec p = make_single(ShapeKind::kCross, Color::kYellow);
  const Trajectory t = reflect_loop(p, gen, judge, cfg, SeededRng(2));
  CHECK(t.steps.size() == 8);
  CHECK(t.reason == StopReason::kBudget);
  CHECK(gen.calls() == 8);
  CHECK(judge.calls() == 8);
  for (const auto& s : t.steps) CHECK_FALSE(s.feedback.is_null);
  // ties between equal violation counts go to the latest image
  CHECK(t.selected == 7);

  cfg.N = 0;
  CHECK(reflect_loop(p, gen, judge, cfg, SeededRng(2)).steps.size() == 1);
}

TEST_CASE("loop context follows the sampling rule") {
  SceneGenerator gen(kHalf, true);
  AlwaysFailJudge judge;
  LoopConfig cfg;
  cfg.K = 3;
  cfg.N = 12;
  const PromptSpec p = make_two(ShapeKind::kCircle, ShapeKind::kTriangle);
  const Trajectory t = reflect_loop(p, gen, judge, cfg, SeededRng(3));
  REQUIRE(t.steps.size() == 13);
  REQUIRE(gen.context_sizes.size() == 13);
  std::set<std::vector<int>> seen;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& ctx = t.steps[i].context;
    CHECK(gen.context_sizes[i] == ctx.size());
    CHECK(ctx.size() == std::min<std::size_t>(i, 3));
    for (std::size_t j = 0; j < ctx.size(); ++j) {
      CHECK(ctx[j] < static_cast<int>(i));
      if (j) CHECK(ctx[j - 1] < ctx[j]);
    }
    if (i > 3) seen.insert(ctx);
  }
  // i = 5: three items drawn from the five available
  CHECK(t.steps[5].context.size() == 3);
  CHECK(t.steps[5].context.back() <= 4);
  // subsets vary across iterations
  CHECK(seen.size() > 3);
}

TEST_CASE("loop is deterministic") {
  LoopConfig cfg;
  cfg.N = 9;
  OracleJudge judge;
  for (const auto& p : some_prompts(12)) {
    SceneGenerator g1({0.2, 0.2, 0.2, 0.2, 0.2, 0.2}, true), g2({0.2, 0.2, 0.2, 0.2, 0.2, 0.2}, true);
    const Trajectory a = reflect_loop(p, g1, judge, cfg, SeededRng(4, p.id));
    const Trajectory b = reflect_loop(p, g2, judge, cfg, SeededRng(4, p.id));
    REQUIRE(a.steps.size() == b.steps.size());
    CHECK(a.selected == b.selected);
    CHECK(a.reason == b.reason);
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      CHECK(a.steps[i].image == b.steps[i].image);
      CHECK(a.steps[i].feedback.text == b.steps[i].feedback.text);
      CHECK(a.steps[i].context == b.steps[i].context);
    }
  }
}

TEST_CASE("loop uses feedback to improve") {
  LearningGenerator gen(2);
  OracleJudge judge;
  LoopConfig cfg;
  const PromptSpec p = make_attribution(ShapeKind::kSquare, Color::kRed, ShapeKind::kCircle, Color::kGreen);
  const Trajectory t = reflect_loop(p, gen, judge, cfg, SeededRng(5));
  CHECK(t.steps.size() == 3);
  CHECK(t.reason == StopReason::kNullFeedback);
  CHECK(t.selected == 2);
  CHECK(t.steps[1].context == std::vector<int>{0});
  CHECK(t.steps[2].context == std::vector<int>{0, 1});
}

TEST_CASE("best of n") {
  const PromptSpec p = make_color(ShapeKind::kTriangle, Color::kBlue);
  SceneGenerator gen(kHalf);
  {
    ScriptedJudge judge({2});
    const BestOfN b = best_of_n(p, gen, judge, 1, SeededRng(6));
    CHECK(b.samples.size() == 1);
    CHECK(b.selected == 0);
  }
  {
    ScriptedJudge judge({3, 1, 2});
    const BestOfN b = best_of_n(p, gen, judge, 3, SeededRng(6));
    CHECK(b.selected == 1);
  }
  {
    ScriptedJudge judge({3, 2, 0, 1, 0});
    const BestOfN b = best_of_n(p, gen, judge, 5, SeededRng(6), false);
    CHECK(b.samples.size() == 5);
    CHECK(b.selected == 2);
  }
  {
    ScriptedJudge judge({3, 2, 0, 1, 0});
    const BestOfN b = best_of_n(p, gen, judge, 5, SeededRng(6));
    CHECK(b.samples.size() == 3);
    CHECK(b.selected == 2);
  }
  CHECK(select_best({make_feedback({}), make_feedback({})}) == 0);
  ScriptedJudge judge({1});
  CHECK_THROWS_AS(best_of_n(p, gen, judge, 0, SeededRng(6)), Error);
}

TEST_CASE("select_final") {
  CHECK(select_final(scripted({2, 1, 0})) == 2);
  CHECK(select_final(scripted({2, 2, 1})) == 2);
  CHECK(select_final(scripted({1, 1})) == 1);
  CHECK(select_final(scripted({1, 3, 2, 1})) == 3);
  // truncation never looks past the budget
  const Trajectory t = scripted({2, 1, 2, 2, 0});
  CHECK(select_final(t, 1) == 0);
  CHECK(select_final(t, 2) == 1);
  CHECK(select_final(t, 4) == 1);
  CHECK(select_final(t, 5) == 4);
  CHECK(select_final(t, 50) == 4);
  for (std::size_t n = 1; n <= 5; ++n) CHECK(select_final(t, n) < static_cast<int>(n));
  CHECK_THROWS_AS(select_final(Trajectory{}), Error);
}

TEST_CASE("first loop image equals the first best-of-n sample") {
  SceneGenerator g1(kHalf, true), g2(kHalf, true);
  OracleJudge judge;
  LoopConfig cfg;
  for (const auto& p : some_prompts(18)) {
    const SeededRng rng(7, p.id);
    const Trajectory t = reflect_loop(p, g1, judge, cfg, rng);
    const BestOfN b = best_of_n(p, g2, judge, 1, rng);
    CHECK(t.steps[0].image == b.samples[0]);
  }
}

TEST_CASE("reflect loop and best-of-n make the same calls") {
  for (int N : {0, 1, 4, 19}) {
    for (const auto& p : some_prompts(24)) {
      SceneGenerator g1({0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, true), g2({0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, true);
      OracleJudge j1, j2;
      LoopConfig cfg;
      cfg.N = N;
      const SeededRng rng(8, p.id);
      reflect_loop(p, g1, j1, cfg, rng);
      best_of_n(p, g2, j2, N + 1, rng);
      CHECK(g1.calls() == g2.calls());
      CHECK(j1.calls() == j2.calls());
      CHECK(g1.calls() == j1.calls());
    }
    SceneGenerator g1(kHalf, true), g2(kHalf, true);
    AlwaysFailJudge j1, j2;
    LoopConfig cfg;
    cfg.N = N;
    const PromptSpec p = make_single(ShapeKind::kCircle, Color::kGreen);
    reflect_loop(p, g1, j1, cfg, SeededRng(9));
    best_of_n(p, g2, j2, N + 1, SeededRng(9));
    CHECK(g1.calls() == static_cast<std::size_t>(N + 1));
    CHECK(g2.calls() == g1.calls());
    CHECK(j2.calls() == j1.calls());
  }
}

TEST_CASE("trajectory dump") {
  const auto dir = scratch_dir("dump");
  SceneGenerator gen(kHalf, true);
  AlwaysFailJudge judge;
  LoopConfig cfg;
  cfg.N = 4;
  const Trajectory t = reflect_loop(make_single(ShapeKind::kSquare, Color::kBlue), gen, judge, cfg, SeededRng(10));
  dump_trajectory(dir, t);
  std::ifstream is(dir / "trajectory.jsonl");
  std::string line;
  int n = 0, selected = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("step").get<int>() == n);
    CHECK(read_ppm((dir / j.at("image").get<std::string>()).string()) == t.steps[static_cast<std::size_t>(n)].image);
    CHECK(j.at("context").get<std::vector<int>>() == t.steps[static_cast<std::size_t>(n)].context);
    CHECK(j.at("violations").size() == 1);
    selected += j.at("selected").get<bool>();
    ++n;
  }
  CHECK(n == 5);
  CHECK(selected == 1);
  CHECK(std::filesystem::exists(dir / "strip.ppm"));
}

TEST_CASE("loop config validation") {
  LoopConfig c;
  CHECK_NOTHROW(c.validate());
  c.K = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.K = 3;
  c.sampler.steps = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}
