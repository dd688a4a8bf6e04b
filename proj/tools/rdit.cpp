// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "rdit/bench.hpp"
#include "rdit/error.hpp"
#include "rdit/simd.hpp"

using namespace rdit;

namespace {

void log_line(const std::string& stage, const std::string& msg) {
  using clock = std::chrono::system_clock;
  const auto t = clock::to_time_t(clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%H:%M:%S", std::localtime(&t));
  std::fprintf(stderr, "[%s %s] %s\n", stamp, stage.c_str(), msg.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reflectdit: in-context reflection for a tiny diffusion transformer"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::uint64_t seed = 0;
  int jobs = 0;
  int steps = 0;
  double guidance = 0.0;
  app.add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed for pools and datasets");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");
  app.add_option("--steps", steps, "sampler steps (loop.steps)")->check(CLI::PositiveNumber);
  app.add_option("--cfg", guidance, "guidance scale (loop.guidance)")->check(CLI::NonNegativeNumber);

  std::size_t prompt_index = 0;
  const std::vector<std::pair<std::string, std::string>> stages{
      {"gen-data", "build prompt pools and the pretraining renders"},
      {"pretrain", "train the base model"},
      {"curate", "sample and judge the labeled pool; build reflect and SFT sets"},
      {"train-reflect", "finetune with reflection contexts"},
      {"train-sft", "finetune on passing generations"},
      {"eval", "evaluate methods over sample budgets"},
      {"ablate", "context size, transformer depth and image grid sweeps"},
      {"loop-demo", "run and dump one refinement trajectory"},
      {"all", "gen-data through eval and ablate"}};
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "loop-demo") sub->add_option("--prompt", prompt_index, "eval pool index");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config(config_path);
    if (!out.empty()) cfg.out = out;
    if (app.count("--seed")) cfg.seed = seed;
    if (jobs > 0) cfg.jobs = jobs;
    if (app.count("--steps")) cfg.loop.sampler.steps = steps;
    if (app.count("--cfg")) cfg.loop.sampler.guidance = guidance;
    resolve_config(cfg);
    echo_config(cfg, cfg.paths().out / "config.resolved.json");
    const std::string cmd = app.get_subcommands().front()->get_name();
    log_line(cmd, std::string("kernels: ") + simd::active_kernels().name);
    auto logger = [](const std::string& stage) { return [stage](const std::string& m) { log_line(stage, m); }; };

    auto run = [&](const std::string& stage) {
      const Logger log = logger(stage);
      if (stage == "gen-data") stage_gen_data(cfg, log);
      else if (stage == "pretrain") stage_pretrain(cfg, log);
      else if (stage == "curate") stage_curate(cfg, log);
      else if (stage == "train-reflect") stage_train_reflect(cfg, log);
      else if (stage == "train-sft") stage_train_sft(cfg, log);
      else if (stage == "eval") stage_eval(cfg, log);
      else if (stage == "ablate") stage_ablate(cfg, log);
      else if (stage == "loop-demo") stage_loop_demo(cfg, prompt_index, log);
    };
    if (cmd == "all") {
      for (const char* s : {"gen-data", "pretrain", "curate", "train-reflect", "train-sft", "eval", "ablate"}) run(s);
    } else {
      run(cmd);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", error_kind_name(e.kind()), e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 100;
  }
  return 0;
}
