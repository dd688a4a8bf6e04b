// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// hard gate fails. Criteria 5b-8 read the artifacts of a full pipeline run.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdit/bench.hpp"
#include "rdit/flow.hpp"
#include "rdit/ops.hpp"
#include "rdit/reflect_loop.hpp"
#include "rdit/trainer.hpp"
#include "stubs.hpp"

namespace fs = std::filesystem;
using namespace rdit;
using rdit::testing::AlwaysFailJudge;
using rdit::testing::AlwaysPassJudge;
using rdit::testing::SceneGenerator;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 ------------------------------------------------------------------

Outcome autodiff(const std::string& probe) {
  const std::string cmd = "\"" + probe + "\"";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {false, "cannot run " + probe};
  char buf[256] = {};
  const bool got = std::fgets(buf, sizeof buf, pipe) != nullptr;
  const int status = pclose(pipe);
  double worst = 0.0;
  int checks = 0;
  char name[64] = {};
  if (!got || status != 0 || std::sscanf(buf, "%lf %d %63s", &worst, &checks, name) != 3) {
    return {false, "probe failed: " + probe};
  }
  return {worst < 1e-4, std::to_string(checks) + " checks over 10 seeds, max rel error " + fmt("%.2e", worst) +
                            " (" + name + ")"};
}

// ---- 2 ------------------------------------------------------------------

Outcome sampler() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeededRng scene_rng(seed, 0x5ce);
    const Image target = render(random_scene(scene_rng));
    const Tensor x_w = image_to_tensor(target);
    for (int steps : {1, 5, 20}) {
      Tensor eps;
      const VelocityFn oracle = [&](const Tensor& x, double t) {
        if (t == 1.0) eps = x.detach();
        return ops::sub(eps, x_w);
      };
      SeededRng rng(seed, steps);
      const Tensor x1 = gaussian_like(x_w.shape(), rng);
      for (double guidance : {1.0, 3.0}) {
        const Tensor out = euler_integrate(x1, oracle, oracle, steps, guidance);
        for (std::size_t k = 0; k < out.numel(); ++k) {
          worst = std::max(worst, std::abs(static_cast<double>(out.data()[k]) - x_w.data()[k]));
        }
      }
    }
  }
  return {worst < 1e-5, "steps {1,5,20}, max abs error " + fmt("%.2e", worst)};
}

// ---- 3 ------------------------------------------------------------------

Outcome oracle() {
  SeededRng rng(2026, 0xacc);
  int detect_failures = 0, judge_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const SceneGraph s = random_scene(rng);
    const Image img = render(s);
    if (!(detect(img) == s)) ++detect_failures;
    const PromptSpec prompt = sample_prompt(kAllCategories[static_cast<std::size_t>(rng.uniform_int(0, 5))], rng);
    const auto fb = judge_feedback(prompt, img);
    if (fb.is_null != score_prompt(prompt, img)) ++judge_failures;
    const Image img2 = render(sample_scene(prompt, rng, rng.bernoulli(0.5)));
    if (judge_feedback(prompt, img2).is_null != score_prompt(prompt, img2)) ++judge_failures;
  }
  return {detect_failures == 0 && judge_failures == 0,
          "10000 scenes, " + std::to_string(detect_failures) + " detect mismatches, " +
              std::to_string(judge_failures) + " judge/scorer disagreements"};
}

// ---- 4 ------------------------------------------------------------------

bool same(const Trajectory& a, const Trajectory& b) {
  if (a.steps.size() != b.steps.size() || a.reason != b.reason || a.selected != b.selected) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (!(a.steps[i].image == b.steps[i].image) || a.steps[i].feedback.text != b.steps[i].feedback.text ||
        a.steps[i].context != b.steps[i].context) {
      return false;
    }
  }
  return true;
}

Outcome loop_conformance() {
  std::vector<std::string> broken;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok && std::find(broken.begin(), broken.end(), what) == broken.end()) broken.push_back(what);
  };
  SeededRng prompt_rng(4, 0x100);
  int runs = 0;
  for (int i = 0; i < 120; ++i) {
    const PromptSpec p = sample_prompt(kAllCategories[static_cast<std::size_t>(i % 6)], prompt_rng);
    for (int K : {1, 2, 3}) {
      for (int N : {0, 1, 5, 20}) {
        LoopConfig cfg;
        cfg.K = K;
        cfg.N = N;
        const SeededRng rng(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(K * 100 + N));
        SceneGenerator gen({0.2, 0.2, 0.2, 0.2, 0.2, 0.2}, true);
        OracleJudge judge;
        const Trajectory t = reflect_loop(p, gen, judge, cfg, rng);
        ++runs;
        expect(std::all_of(gen.context_sizes.begin(), gen.context_sizes.end(),
                           [&](std::size_t n) { return n <= static_cast<std::size_t>(K); }),
               "context size <= K");
        expect(judge.calls() == gen.calls() && gen.calls() == t.steps.size(), "one judge call per image");
        expect(t.steps.size() <= static_cast<std::size_t>(N + 1) && !t.steps.empty(), "length <= N+1");
        expect(t.reason == StopReason::kBudget || t.steps.back().feedback.is_null, "stops on null feedback");

        SceneGenerator gen2({0.2, 0.2, 0.2, 0.2, 0.2, 0.2}, true);
        OracleJudge judge2;
        expect(same(t, reflect_loop(p, gen2, judge2, cfg, rng)), "fixed-seed determinism");

        SceneGenerator gen3({0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, true);
        AlwaysPassJudge pass;
        expect(reflect_loop(p, gen3, pass, cfg, rng).steps.size() == 1, "always-pass => length 1");
      }
    }
  }
  std::string detail = std::to_string(runs) + " trajectories";
  for (const auto& b : broken) detail += "; violated: " + b;
  return {broken.empty(), detail};
}

// ---- 5 ------------------------------------------------------------------

Outcome overfit() {
  SeededRng rng(3);
  const PromptPools pools = build_prompt_pool(60, 6, rng);
  const std::vector<PromptSpec> prompts(pools.train.begin(), pools.train.begin() + 16);
  const auto examples = examples_from(build_pretrain_set(prompts, 16, rng));
  RunConfig rc;
  ReflectModel model(rc.base_spec());
  TrainConfig c;
  c.steps = 2000;
  c.batch = 16;
  c.lr = 2e-3;
  c.warmup = 100;
  c.cond_dropout = 0.0;
  c.log_every = 100;
  const double before = heldout_loss(model, c, examples, 1);
  const TrainReport r = train(model, c, examples);
  const double after = heldout_loss(model, c, examples, 1);
  return {after < 0.05, "16 pairs, 2000 steps: fixed-draw loss " + fmt("%.4f", before) + " -> " +
                            fmt("%.4f", after) + ", last batch " + fmt("%.4f", r.curve.back().loss)};
}

std::vector<EvalReport> read_reports(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing " + path.string());
  const auto j = nlohmann::json::parse(is);
  std::vector<EvalReport> out;
  for (const auto& r : j) out.push_back(report_from_json(r));
  return out;
}

const EvalReport& find(const std::vector<EvalReport>& rs, const std::string& method, const std::string& variant) {
  for (const auto& r : rs) {
    if (r.method == method && r.variant == variant) return r;
  }
  throw std::runtime_error("no report for " + method + " / " + variant);
}

std::string main_scale(const EvalReport& r) {
  return std::to_string(r.seeds.size()) + " seeds x " + std::to_string(r.prompts) + " prompts";
}

bool full_scale(const EvalReport& r) { return r.seeds.size() == 3 && r.prompts == 300; }

Outcome base_score(const fs::path& artifacts) {
  const auto rs = read_reports(artifacts / "eval" / "eval.json");
  const EvalReport& base = find(rs, "base", "main");
  const double s = base.curve.front().overall;
  return {s >= 0.45 && full_scale(base), "base single-sample overall " + fmt("%.3f", s) + " (" + main_scale(base) + ")"};
}

// ---- 6 ------------------------------------------------------------------

Outcome ordering(const fs::path& artifacts) {
  const auto rs = read_reports(artifacts / "eval" / "eval.json");
  const EvalReport& base = find(rs, "base", "main");
  const EvalReport& bon = find(rs, "best-of-n", "main");
  const EvalReport& ref = find(rs, "reflect", "main");
  const double b = base.at(20).overall, n = bon.at(20).overall, r = ref.at(20).overall;
  bool monotone = true;
  std::string curve;
  for (int budget : {4, 8, 12, 16, 20}) {
    const double v = ref.at(budget).overall;
    if (!curve.empty()) {
      monotone = monotone && v >= ref.at(budget - 4).overall;
      curve += ",";
    }
    curve += fmt("%.3f", v);
  }
  const bool ok = r >= n + 0.03 && n >= b + 0.05 && monotone && full_scale(ref) && full_scale(bon) && full_scale(base);
  return {ok, "budget 20: base " + fmt("%.3f", b) + ", best-of-20 " + fmt("%.3f", n) + ", reflect " + fmt("%.3f", r) +
                  "; reflect curve " + curve + (monotone ? "" : " (not monotone)") + " (" + main_scale(ref) + ")"};
}

// ---- 7 ------------------------------------------------------------------

Outcome ablation(const fs::path& artifacts) {
  const auto ks = read_reports(artifacts / "ablation" / "ablation_K.json");
  const auto grids = read_reports(artifacts / "ablation" / "ablation_grid.json");
  const double k1 = find(ks, "reflect", "K=1").at(20).overall, k3 = find(ks, "reflect", "K=3").at(20).overall;
  const double g2 = find(grids, "reflect", "grid=2x2").at(20).overall;
  const double g4 = find(grids, "reflect", "grid=4x4").at(20).overall;
  const bool hard = k3 >= k1 - 0.01 && g4 >= g2 - 0.01;
  std::string soft = (k3 > k1 && g4 > g2) ? "strict trends hold" : "strict trend missed (soft)";
  return {hard, "budget 20: K=1 " + fmt("%.3f", k1) + ", K=3 " + fmt("%.3f", k3) + "; grid 2x2 " + fmt("%.3f", g2) +
                    ", 4x4 " + fmt("%.3f", g4) + "; " + soft + " (" + main_scale(find(ks, "reflect", "K=3")) + ")"};
}

// ---- 8 ------------------------------------------------------------------

Outcome sft(const fs::path& artifacts) {
  const auto rs = read_reports(artifacts / "eval" / "eval.json");
  const EvalReport& s = find(rs, "sft+bestofn", "main");
  const EvalReport& ref = find(rs, "reflect", "main");
  const double r20 = ref.at(20).overall, s20 = s.at(20).overall, r4 = ref.at(4).overall;
  const bool soft = r4 >= s20 - 0.02;
  return {r20 >= s20 && full_scale(s) && full_scale(ref),
          "budget 20: reflect " + fmt("%.3f", r20) + ", sft+best-of-20 " + fmt("%.3f", s20) + "; reflect@4 " +
              fmt("%.3f", r4) + (soft ? " (soft target met)" : " (soft target missed)") + " (" + main_scale(s) + ")"};
}

// ---- 9 ------------------------------------------------------------------

Outcome parity() {
  int cases = 0, mismatches = 0;
  SeededRng prompt_rng(9, 0x9a);
  for (int i = 0; i < 60; ++i) {
    const PromptSpec p = sample_prompt(kAllCategories[static_cast<std::size_t>(i % 6)], prompt_rng);
    for (int budget = 1; budget <= 20; ++budget) {
      const SeededRng rng(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(budget));
      LoopConfig cfg;
      cfg.N = budget - 1;
      for (int judge_kind = 0; judge_kind < 2; ++judge_kind) {
        SceneGenerator g1({0.1, 0.1, 0.1, 0.1, 0.1, 0.1}), g2({0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
        std::unique_ptr<Judge> j1, j2;
        if (judge_kind == 0) {
          j1 = std::make_unique<OracleJudge>();
          j2 = std::make_unique<OracleJudge>();
        } else {
          j1 = std::make_unique<AlwaysFailJudge>();
          j2 = std::make_unique<AlwaysFailJudge>();
        }
        reflect_loop(p, g1, *j1, cfg, rng);
        best_of_n(p, g2, *j2, budget, rng);
        ++cases;
        if (g1.calls() != g2.calls() || j1->calls() != j2->calls()) ++mismatches;
      }
    }
  }
  return {mismatches == 0,
          std::to_string(cases) + " (prompt, budget, judge) cases, " + std::to_string(mismatches) + " call-count mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance suite");
  std::string artifacts = std::getenv("RDIT_ARTIFACTS") ? std::getenv("RDIT_ARTIFACTS") : "/root/runs/desk";
  std::string probe = RDIT_GRAD_PROBE;
  std::vector<int> only;
  app.add_option("--artifacts", artifacts, "pipeline output directory (env RDIT_ARTIFACTS)");
  app.add_option("--grad-probe", probe, "float64 gradient probe executable");
  app.add_option("--only", only, "criteria to run")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };
  const fs::path dir = artifacts;
  const std::vector<Criterion> criteria{
      {1, "autodiff soundness", [&] { return autodiff(probe); }},
      {2, "flow sampler exactness", sampler},
      {3, "oracle equivalence", oracle},
      {4, "loop conformance", loop_conformance},
      {5, "training convergence", [&] {
         Outcome a = overfit();
         Outcome b;
         try {
           b = base_score(dir);
         } catch (const std::exception& e) {
           b = {false, e.what()};
         }
         return Outcome{a.pass && b.pass, a.detail + "; " + b.detail};
       }},
      {6, "reflect vs best-of-n vs base", [&] { return ordering(dir); }},
      {7, "ablation trends", [&] { return ablation(dir); }},
      {8, "sft baseline ordering", [&] { return sft(dir); }},
      {9, "throughput parity", parity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
