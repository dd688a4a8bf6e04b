// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rdit/bench.hpp"
#include "rdit/error.hpp"
#include "stubs.hpp"

using namespace rdit;
using namespace rdit::testing;
using nlohmann::json;

namespace {

std::string error_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    return e.what();
  }
  return "";
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Minimal well-formedness check: balanced, properly nested tags and quoted
// attributes.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while ((i = s.find('<', i)) != std::string::npos) {
    const std::size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    std::size_t quotes = 0;
    for (char ch : tag) quotes += ch == '"';
    if (quotes % 2) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty();
}

std::vector<PromptSpec> eval_pool(int n) {
  SeededRng rng(31);
  return build_prompt_pool(60, n, rng).eval;
}

EvalReport fake_report(const std::string& method, double base) {
  EvalReport r;
  r.method = method;
  r.seeds = {0, 1};
  for (int b : {4, 8, 12, 16, 20}) {
    std::array<double, kNumCategories> cats{};
    for (std::size_t c = 0; c < kNumCategories; ++c) cats[c] = std::min(1.0, base + 0.01 * b + 0.05 * static_cast<double>(c));
    r.curve.push_back(make_budget_score(b, cats));
  }
  return r;
}

}  // namespace

TEST_CASE("config defaults and strictness") {
  const RunConfig c = config_from_json(json::object());
  CHECK(c.loop.K == 3);
  CHECK(c.loop.N == 20);
  CHECK(c.loop.sampler.steps == 20);
  CHECK(c.reflect.K == 3);
  CHECK(c.eval.budgets == std::vector<int>{4, 8, 12, 16, 20});
  CHECK(c.eval.seeds.size() == 3);
  CHECK(c.data.n_eval == 300);

  CHECK(error_of({{"foo", 1}}).find("'foo'") != std::string::npos);
  CHECK(error_of({{"loop", {{"foo", 1}}}}).find("'loop.foo'") != std::string::npos);
  CHECK(error_of({{"loop", {{"K", "three"}}}}).find("'loop.K'") != std::string::npos);
  CHECK(error_of({{"seed", -1}}).find("'seed'") != std::string::npos);
  CHECK(error_of({{"eval", {{"budgets", {1.5}}}}}).find("'eval.budgets'") != std::string::npos);
  CHECK(error_of({{"model", 3}}).find("'model'") != std::string::npos);

  RunConfig missing_out = config_from_json(json::object());
  try {
    missing_out.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'out'") != std::string::npos);
  }

  RunConfig bad = config_from_json({{"out", "x"}, {"loop", {{"K", 4}}}});
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = config_from_json({{"out", "x"}, {"eval", {{"methods", {"dpo"}}}}});
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = config_from_json({{"out", "x"}, {"eval", {{"budgets", {8, 4}}}}});
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = config_from_json({{"out", "x"}, {"sft", {{"steps", 10}}}});
  try {
    bad.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'sft'") != std::string::npos);
  }
}

TEST_CASE("config round trip") {
  const auto dir = scratch_dir("config");
  {
    std::ofstream os(dir / "c.json");
    os << R"({"out": "run", "seed": 5, "model": {"width": 32}, "loop": {"guidance": 2.0},
             "eval": {"budgets": [1, 2]}, "reflect": {"steps": 7, "warmup": 2, "freeze_table": true}})";
  }
  RunConfig a = parse_config(dir / "c.json");
  CHECK(a.model.width == 32);
  CHECK(a.model.depth == RunConfig{}.model.depth);
  CHECK(a.reflect.steps == 7);
  CHECK(a.reflect.freeze_table);
  resolve_config(a);
  CHECK(std::filesystem::path(a.out).is_absolute());
  CHECK(std::filesystem::path(a.reflect.dataset).is_absolute());
  echo_config(a, dir / "echo.json");
  const RunConfig b = parse_config(dir / "echo.json");
  CHECK(config_to_json(b) == config_to_json(a));
  echo_config(b, dir / "echo2.json");
  CHECK(slurp(dir / "echo.json") == slurp(dir / "echo2.json"));
}

TEST_CASE("always-pass judge scores every method 1.0") {
  const auto pool = eval_pool(12);
  for (const char* method : kMethods) {
    SceneGenerator gen({0, 0, 0, 0, 0, 0}, true);
    AlwaysPassJudge judge;
    EvalOptions opt;
    opt.seeds = {0};
    // the scorer is independent of the judge, so use a generator that always satisfies
    SceneGenerator good({1, 1, 1, 1, 1, 1}, true);
    const EvalReport r = run_eval(method, good, judge, pool, opt);
    for (const auto& s : r.curve) {
      CHECK(s.overall == doctest::Approx(1.0));
      for (double v : s.category) CHECK(v == doctest::Approx(1.0));
    }
    CHECK(good.calls() == pool.size());
  }
}

TEST_CASE("budget 1 reflect equals best-of-1") {
  const auto pool = eval_pool(18);
  const std::array<double, kNumCategories> p{0.4, 0.4, 0.4, 0.4, 0.4, 0.4};
  SceneGenerator g1(p, true), g2(p, true);
  OracleJudge judge;
  EvalOptions opt;
  opt.budgets = {1};
  const EvalReport a = run_eval("reflect", g1, judge, pool, opt);
  const EvalReport b = run_eval("best-of-n", g2, judge, pool, opt);
  CHECK(a.curve[0].category == b.curve[0].category);
  CHECK(a.curve[0].overall == b.curve[0].overall);
}

TEST_CASE("eval curves and accounting") {
  const auto pool = eval_pool(24);
  const std::array<double, kNumCategories> p{0.3, 0.2, 0.1, 0.25, 0.15, 0.05};
  OracleJudge judge;
  EvalOptions opt;
  opt.seeds = {0, 1};
  std::mutex mu;
  std::vector<PromptOutcome> outcomes;
  opt.on_outcome = [&](const PromptOutcome& o) {
    std::lock_guard lock(mu);
    outcomes.push_back(o);
  };
  SceneGenerator gen(p, true);
  const EvalReport r = run_eval("reflect", gen, judge, pool, opt);
  CHECK(r.seeds == opt.seeds);
  CHECK(r.prompts == pool.size());
  CHECK(outcomes.size() == pool.size() * 2);
  for (const auto& o : outcomes) {
    CHECK(o.images <= 20);
    for (std::size_t b = 1; b < o.pass.size(); ++b) CHECK(o.pass[b - 1] <= o.pass[b]);
  }
  for (std::size_t b = 0; b < r.curve.size(); ++b) {
    double sum = 0.0;
    for (double v : r.curve[b].category) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(r.curve[b].overall - sum / 6.0) < 1e-12);
    if (b) CHECK(r.curve[b].overall >= r.curve[b - 1].overall);
  }
  CHECK(r.generator_calls == gen.calls());
  CHECK(r.judge_calls == judge.calls());

  // jobs do not change the report
  SceneGenerator gen2(p, true);
  opt.jobs = 3;
  opt.on_outcome = nullptr;
  const EvalReport r3 = run_eval("reflect", gen2, judge, pool, opt);
  CHECK(report_to_json(r3) == report_to_json(r));

  // reruns with the listed seeds reproduce the report
  SceneGenerator gen3(p, true);
  opt.jobs = 1;
  opt.seeds = r.seeds;
  CHECK(report_to_json(run_eval("reflect", gen3, judge, pool, opt)) == report_to_json(r));

  SceneGenerator plain(p, false);
  CHECK_THROWS_AS(run_eval("reflect", plain, judge, pool, opt), Error);
  CHECK_THROWS_AS(run_eval("dpo", plain, judge, pool, opt), Error);
}

TEST_CASE("report emission") {
  const auto dir = scratch_dir("report");
  const std::vector<EvalReport> reports{fake_report("base", 0.2), fake_report("best-of-n", 0.3),
                                        fake_report("reflect", 0.35)};
  emit_report(reports, dir / "a", "eval", "overall & budget");
  emit_report(reports, dir / "b", "eval", "overall & budget");
  const std::string csv = slurp(dir / "a" / "eval.csv");
  std::size_t rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows - 1 == reports.size() * 5 * 7);
  CHECK(csv == slurp(dir / "b" / "eval.csv"));
  const std::string svg = slurp(dir / "a" / "eval.svg");
  CHECK(svg == slurp(dir / "b" / "eval.svg"));
  CHECK(well_formed_xml(svg));
  CHECK_FALSE(well_formed_xml("<svg><g></svg>"));

  const auto back = nlohmann::json::parse(slurp(dir / "a" / "eval.json"));
  REQUIRE(back.size() == 3);
  CHECK(report_to_json(report_from_json(back[1])) == report_to_json(reports[1]));

  const std::string table = trend_table(reports);
  CHECK(table.find("| variant | 4 | 8 | 12 | 16 | 20 |") != std::string::npos);
  CHECK(table.find("| reflect |") != std::string::npos);

  CHECK_THROWS_AS(emit_report(reports, "/proc/rdit_cannot_write", "eval", "x"), Error);
}
