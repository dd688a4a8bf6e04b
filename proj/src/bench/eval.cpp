// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "rdit/bench.hpp"
#include "rdit/error.hpp"

namespace rdit {

using nlohmann::json;

const BudgetScore& EvalReport::at(int budget) const {
  for (const auto& s : curve) {
    if (s.budget == budget) return s;
  }
  fail(ErrorKind::kState, method + "/" + variant + " has no score at budget " + std::to_string(budget));
}

BudgetScore make_budget_score(int budget, const std::array<double, kNumCategories>& category) {
  BudgetScore s;
  s.budget = budget;
  s.category = category;
  double sum = 0.0;
  for (double v : category) sum += v;
  s.overall = sum / kNumCategories;
  return s;
}

json report_to_json(const EvalReport& r) {
  json curve = json::array();
  for (const auto& s : r.curve) {
    json cats = json::object();
    for (Category c : kAllCategories) cats[std::string(category_name(c))] = s.category[static_cast<std::size_t>(c)];
    curve.push_back({{"budget", s.budget}, {"overall", s.overall}, {"categories", cats}});
  }
  return {{"method", r.method},
          {"variant", r.variant},
          {"seeds", r.seeds},
          {"prompts", r.prompts},
          {"generator_calls", r.generator_calls},
          {"judge_calls", r.judge_calls},
          {"curve", curve}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.prompts = j.at("prompts").get<std::size_t>();
    r.generator_calls = j.at("generator_calls").get<std::size_t>();
    r.judge_calls = j.at("judge_calls").get<std::size_t>();
    for (const auto& s : j.at("curve")) {
      std::array<double, kNumCategories> cats{};
      for (Category c : kAllCategories) {
        cats[static_cast<std::size_t>(c)] = s.at("categories").at(std::string(category_name(c))).get<double>();
      }
      BudgetScore b = make_budget_score(s.at("budget").get<int>(), cats);
      r.curve.push_back(b);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("eval report: ") + e.what());
  }
  return r;
}

EvalReport run_eval(const std::string& method, Generator& generator, Judge& judge,
                    const std::vector<PromptSpec>& eval_pool, const EvalOptions& options) {
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
    fail(ErrorKind::kConfig, "unknown eval method '" + method + "'");
  }
  if (options.budgets.empty() || options.seeds.empty()) fail(ErrorKind::kConfig, "eval needs budgets and seeds");
  for (std::size_t i = 0; i < options.budgets.size(); ++i) {
    if (options.budgets[i] < 1 || (i && options.budgets[i] <= options.budgets[i - 1])) {
      fail(ErrorKind::kConfig, "eval budgets must be positive and increasing");
    }
  }
  const bool reflect = method == "reflect";
  if (reflect && !generator.supports_context()) {
    fail(ErrorKind::kConfig, "the reflect method needs a checkpoint with context-encoder parameters");
  }
  std::array<int, kNumCategories> per_category{};
  for (const auto& p : eval_pool) ++per_category[static_cast<std::size_t>(p.category)];
  for (Category c : kAllCategories) {
    if (per_category[static_cast<std::size_t>(c)] == 0) {
      fail(ErrorKind::kData, "eval pool has no " + std::string(category_name(c)) + " prompt");
    }
  }

  const int max_budget = options.budgets.back();
  const std::size_t nb = options.budgets.size();
  const std::size_t n_items = options.seeds.size() * eval_pool.size();
  std::vector<PromptOutcome> outcomes(n_items);
  const std::size_t gen0 = generator.calls();
  const std::size_t judge0 = judge.calls();

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t w = next++; w < n_items; w = next++) {
      try {
        const std::size_t s = w / eval_pool.size();
        const std::size_t p = w % eval_pool.size();
        const PromptSpec& prompt = eval_pool[p];
        const SeededRng rng = SeededRng(options.seeds[s], 0xe7a1).split(p);
        PromptOutcome out;
        out.prompt_index = p;
        out.seed = options.seeds[s];
        out.pass.resize(nb);
        if (reflect) {
          LoopConfig lc;
          lc.K = options.K;
          lc.N = max_budget - 1;
          const Trajectory traj = reflect_loop(prompt, generator, judge, lc, rng);
          out.images = static_cast<int>(traj.steps.size());
          for (std::size_t b = 0; b < nb; ++b) {
            const int idx = select_final(traj, static_cast<std::size_t>(options.budgets[b]));
            out.pass[b] = score_prompt(prompt, traj.steps[static_cast<std::size_t>(idx)].image);
          }
        } else {
          const int n = method == "base" ? 1 : max_budget;
          const BestOfN bon = best_of_n(prompt, generator, judge, n, rng);
          out.images = static_cast<int>(bon.samples.size());
          for (std::size_t b = 0; b < nb; ++b) {
            const int idx = select_best(bon.feedback, static_cast<std::size_t>(options.budgets[b]));
            out.pass[b] = score_prompt(prompt, bon.samples[static_cast<std::size_t>(idx)]);
          }
        }
        if (options.on_outcome) options.on_outcome(out);
        outcomes[w] = std::move(out);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n_items;
      }
    }
  };
  std::vector<std::thread> threads;
  for (int t = 1; t < std::max(1, options.jobs); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  EvalReport report;
  report.method = method;
  report.seeds = options.seeds;
  report.prompts = eval_pool.size();
  report.generator_calls = generator.calls() - gen0;
  report.judge_calls = judge.calls() - judge0;
  for (std::size_t b = 0; b < nb; ++b) {
    std::array<double, kNumCategories> rate{};
    for (std::size_t s = 0; s < options.seeds.size(); ++s) {
      std::array<int, kNumCategories> passes{};
      for (std::size_t p = 0; p < eval_pool.size(); ++p) {
        passes[static_cast<std::size_t>(eval_pool[p].category)] += outcomes[s * eval_pool.size() + p].pass[b];
      }
      for (std::size_t c = 0; c < kNumCategories; ++c) {
        rate[c] += static_cast<double>(passes[c]) / per_category[c];
      }
    }
    for (double& r : rate) r /= static_cast<double>(options.seeds.size());
    report.curve.push_back(make_budget_score(options.budgets[b], rate));
  }
  return report;
}

}  // namespace rdit
