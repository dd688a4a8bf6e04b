// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <unordered_map>

#include "rdit/data.hpp"
#include "rdit/error.hpp"

namespace rdit {

namespace {

// n split into six near-equal shares, larger shares first.
std::array<int, kNumCategories> shares(int n) {
  std::array<int, kNumCategories> out{};
  for (int c = 0; c < kNumCategories; ++c) out[static_cast<std::size_t>(c)] = n / kNumCategories + (c < n % kNumCategories);
  return out;
}

template <class T>
void shuffle(std::vector<T>& v, SeededRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

PromptPools build_prompt_pool(int n_train, int n_eval, SeededRng& rng) {
  if (n_train < kNumCategories || n_eval < kNumCategories) {
    fail(ErrorKind::kData, "prompt pools need at least one prompt per category (n_train=" + std::to_string(n_train) +
                               ", n_eval=" + std::to_string(n_eval) + ")");
  }
  const auto train_share = shares(n_train);
  const auto eval_share = shares(n_eval);
  const double eval_fraction = static_cast<double>(n_eval) / static_cast<double>(n_train + n_eval);
  PromptPools pools;
  for (Category c : kAllCategories) {
    std::vector<PromptSpec> ids = enumerate_prompts(c);
    shuffle(ids, rng);
    const auto capacity = static_cast<int>(ids.size());
    const int held_out = std::max(1, static_cast<int>(std::lround(capacity * eval_fraction)));
    if (held_out >= capacity) {
      fail(ErrorKind::kData, "category " + std::string(category_name(c)) + " has only " + std::to_string(capacity) +
                                 " distinct prompts; the requested split leaves none for training");
    }
    const auto ci = static_cast<std::size_t>(c);
    for (int i = 0; i < eval_share[ci]; ++i) pools.eval.push_back(ids[static_cast<std::size_t>(i % held_out)]);
    const int n_train_ids = capacity - held_out;
    for (int i = 0; i < train_share[ci]; ++i) {
      pools.train.push_back(ids[static_cast<std::size_t>(held_out + i % n_train_ids)]);
    }
  }
  return pools;
}

std::uint64_t pool_hash(const std::vector<PromptSpec>& pool) {
  std::uint64_t h = fnv1a64("pool");
  for (const auto& p : pool) h = fnv1a64(&p.id, sizeof p.id, h);
  return h;
}

std::map<std::string, int> category_counts(const std::vector<PromptSpec>& pool) {
  std::map<std::string, int> counts;
  for (Category c : kAllCategories) counts[std::string(category_name(c))] = 0;
  for (const auto& p : pool) ++counts[std::string(category_name(p.category))];
  return counts;
}

nlohmann::json pools_to_json(const PromptPools& pools) {
  auto list = [](const std::vector<PromptSpec>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back(prompt_to_json(p));
    return a;
  };
  return {{"format", kDatasetFormat},
          {"train_hash", hex64(pool_hash(pools.train))},
          {"eval_hash", hex64(pool_hash(pools.eval))},
          {"train", list(pools.train)},
          {"eval", list(pools.eval)}};
}

PromptPools pools_from_json(const nlohmann::json& j) {
  PromptPools pools;
  try {
    for (const auto& p : j.at("train")) pools.train.push_back(prompt_from_json(p));
    for (const auto& p : j.at("eval")) pools.eval.push_back(prompt_from_json(p));
    if (j.at("train_hash").get<std::string>() != hex64(pool_hash(pools.train)) ||
        j.at("eval_hash").get<std::string>() != hex64(pool_hash(pools.eval))) {
      fail(ErrorKind::kFormat, "prompt pool hash mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("prompt pools: ") + e.what());
  }
  return pools;
}

std::vector<PretrainExample> build_pretrain_set(const std::vector<PromptSpec>& pool, int n, SeededRng& rng) {
  if (pool.empty() || n < 1) fail(ErrorKind::kData, "pretrain set needs a non-empty pool and n >= 1");
  std::vector<PretrainExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PretrainExample ex;
    ex.prompt = pool[static_cast<std::size_t>(i) % pool.size()];
    ex.scene = sample_scene(ex.prompt, rng, true);
    ex.image = render(ex.scene);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledImage> synthesize_labeled_pool(Generator& generator, Judge& judge,
                                                  const std::vector<PromptSpec>& prompts, int m_per_prompt,
                                                  std::uint64_t seed, int jobs) {
  if (m_per_prompt < 1) fail(ErrorKind::kConfig, "m_per_prompt must be at least 1");
  const std::size_t m = static_cast<std::size_t>(m_per_prompt);
  std::vector<LabeledImage> out(prompts.size() * m);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t p = next++; p < prompts.size(); p = next++) {
      SeededRng rng(seed, p);
      for (std::size_t j = 0; j < m; ++j) {
        SeededRng sample_rng = rng.split(j);
        LabeledImage& rec = out[p * m + j];
        rec.prompt = prompts[p];
        rec.image = generator.generate(prompts[p], {}, sample_rng);
        rec.feedback = judge.judge(prompts[p], rec.image);
        rec.pass = rec.feedback.is_null;
      }
    }
  };
  std::vector<std::thread> threads;
  for (int t = 1; t < std::max(1, jobs); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  // Generation index within each distinct prompt, in pool order.
  std::unordered_map<std::uint64_t, int> seen;
  for (auto& rec : out) rec.index = seen[rec.prompt.id]++;
  return out;
}

ReflectDataset build_reflect_dataset(const std::vector<LabeledImage>& pool) {
  std::vector<std::uint64_t> order;
  std::unordered_map<std::uint64_t, std::vector<const LabeledImage*>> groups;
  for (const auto& rec : pool) {
    auto [it, inserted] = groups.try_emplace(rec.prompt.id);
    if (inserted) order.push_back(rec.prompt.id);
    it->second.push_back(&rec);
  }
  ReflectDataset ds;
  for (std::uint64_t id : order) {
    auto& recs = groups[id];
    std::stable_sort(recs.begin(), recs.end(), [](const LabeledImage* a, const LabeledImage* b) { return a->index < b->index; });
    std::vector<ContextItem> fails;
    std::vector<const LabeledImage*> passes;
    for (const LabeledImage* r : recs) {
      if (r->pass) {
        passes.push_back(r);
      } else {
        fails.push_back({r->image, tokenize(r->feedback.text), r->index});
      }
    }
    if (fails.empty()) {
      ++ds.dropped_all_pass;
      continue;
    }
    if (passes.empty()) {
      ++ds.dropped_all_fail;
      continue;
    }
    ++ds.prompts_kept;
    for (const LabeledImage* r : passes) ds.examples.push_back({r->prompt, r->image, fails});
  }
  if (ds.examples.empty()) {
    fail(ErrorKind::kData, "no prompt has both passing and failing generations (" + std::to_string(ds.dropped_all_pass) +
                               " all-pass, " + std::to_string(ds.dropped_all_fail) +
                               " all-fail); enlarge the labeled pool");
  }
  return ds;
}

std::vector<SftExample> build_sft_set(const ReflectDataset& reflect) {
  std::vector<SftExample> out;
  out.reserve(reflect.examples.size());
  for (const auto& ex : reflect.examples) out.push_back({ex.prompt, ex.good});
  return out;
}

std::vector<ContextItem> draw_training_context(const CuratedExample& example, int k, SeededRng& rng,
                                               double empty_prob) {
  if (k < 1) fail(ErrorKind::kConfig, "context capacity K must be at least 1");
  if (example.context_pool.empty()) fail(ErrorKind::kData, "curated example without context pool");
  if (rng.bernoulli(empty_prob)) return {};
  const int limit = std::min(k, static_cast<int>(example.context_pool.size()));
  const int size = rng.uniform_int(1, limit);
  const auto picks = rng.sample_without_replacement(example.context_pool.size(), static_cast<std::size_t>(size));
  std::vector<ContextItem> out;
  out.reserve(picks.size());
  for (std::size_t i : picks) out.push_back(example.context_pool[i]);
  return out;
}

}  // namespace rdit
