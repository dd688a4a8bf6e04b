// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include "rdit/generator.hpp"

#include "rdit/error.hpp"
#include "rdit/flow.hpp"

namespace rdit {

ModelGenerator::ModelGenerator(const ReflectModel& model, SamplerConfig sampler) : model_(model), sampler_(sampler) {
  if (sampler_.steps < 1) fail(ErrorKind::kConfig, "sampler steps must be at least 1");
  if (!(sampler_.guidance >= 0.0)) fail(ErrorKind::kConfig, "guidance scale must be non-negative");
  NoGradGuard no_grad;
  null_kv_ = model_.dit().project_conditioning(model_.dit().null_conditioning());
}

Image ModelGenerator::do_generate(const PromptSpec& prompt, std::span<const ContextItem> context, SeededRng& rng) {
  if (!context.empty() && !model_.has_context()) fail(ErrorKind::kState, "generator has no context pathway");
  NoGradGuard no_grad;
  const CrossKV kv = model_.dit().project_conditioning(model_.condition(tokenize(prompt.text), context));
  const DiT& dit = model_.dit();
  const VelocityFn cond = [&](const Tensor& x, double t) { return dit.forward(x, t, kv); };
  const VelocityFn uncond = [&](const Tensor& x, double t) { return dit.forward(x, t, null_kv_); };
  return euler_sample(cond, uncond, sampler_.steps, sampler_.guidance, rng);
}

FeedbackRecord NoisyJudge::do_judge(const PromptSpec& prompt, const Image& image) {
  FeedbackRecord truth = judge_feedback(prompt, image);
  SeededRng rng(seed_ ^ image_hash(image), prompt.id);
  if (!rng.bernoulli(flip_prob_)) return truth;
  if (!truth.is_null) return make_feedback({});
  Violation v;
  v.kind = ViolationKind::kMissing;
  v.shape = prompt.shape_a;
  v.color = prompt.color_a;
  return make_feedback({v});
}

}  // namespace rdit
