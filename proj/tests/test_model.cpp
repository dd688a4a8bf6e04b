// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "rdit/error.hpp"
#include "rdit/flow.hpp"
#include "rdit/ops.hpp"
#include "rdit/optim.hpp"
#include "rdit/reflect_model.hpp"

using namespace rdit;

namespace {

ModelSpec tiny_spec(bool context) {
  ModelSpec spec;
  spec.dit.width = 16;
  spec.dit.heads = 2;
  spec.dit.depth = 1;
  spec.dit.ffn_mult = 2;
  spec.dit.cond_width = 16;
  if (context) {
    ContextConfig c;
    c.vision_dim = 8;
    c.heads = 2;
    spec.context = c;
  }
  return spec;
}

std::vector<real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ContextItem item_for(std::uint64_t seed, const std::string& text) {
  SeededRng rng(seed);
  ContextItem it;
  it.image = render(random_scene(rng));
  it.feedback = tokenize(text);
  return it;
}

void randomize(ParamStore& store, std::uint64_t seed) {
  SeededRng rng(seed);
  for (auto& e : store.entries()) {
    for (real& x : e.tensor.data()) x = static_cast<real>(rng.normal() * 0.2);
  }
}

}  // namespace

TEST_CASE("patchify index map") {
  SeededRng rng(1);
  const Tensor x = gaussian_like({32, 32, 3}, rng);
  const Tensor tokens = patchify(x, 4);
  CHECK(tokens.shape() == Shape{64, 48});
  CHECK(values(unpatchify(tokens, 32, 4)) == values(x));
  const auto idx = patchify_index(32, 4, 3);
  for (std::size_t f = 0; f < 48; ++f) {
    const std::size_t pixel = idx[f] / 3;
    CHECK(pixel / 32 < 4);
    CHECK(pixel % 32 < 4);
  }
  CHECK_THROWS_AS(patchify(Tensor::zeros({30, 30, 3}), 4), Error);
}

TEST_CASE("dit forward shapes and conditioning checks") {
  ReflectModel model(tiny_spec(true));
  SeededRng rng(2);
  const Tensor x = gaussian_like({32, 32, 3}, rng);
  const auto prompt = tokenize("a red circle");
  std::vector<ContextItem> items;
  for (int n = 0; n <= 3; ++n) {
    const auto cond = model.condition(prompt, items);
    CHECK(model.dit().forward(x, 0.5, cond).shape() == Shape{32, 32, 3});
    items.push_back(item_for(10 + n, "There is no red circle in the image."));
  }
  CHECK(model.dit().forward(x, 0.1, model.dit().null_conditioning()).shape() == Shape{32, 32, 3});
  ConditioningBundle bad;
  bad.sequence = Tensor::zeros({3, 8});
  CHECK_THROWS_AS(model.dit().forward(x, 0.5, bad), Error);
  CHECK_THROWS_AS(model.dit().forward(Tensor::zeros({16, 16, 3}), 0.5, model.dit().null_conditioning()), Error);
}

TEST_CASE("prompt keys are independent of context order") {
  ReflectModel model(tiny_spec(true));
  randomize(model.params(), 3);
  const auto prompt = tokenize("a red circle and a blue square");
  const ContextItem a = item_for(1, "There is no blue square in the image.");
  const ContextItem b = item_for(2, "The circle should be red, but it is green.");
  const std::vector<ContextItem> ab{a, b}, ba{b, a};
  const auto ca = model.condition(prompt, ab), cb = model.condition(prompt, ba);
  const auto ka = model.dit().project_conditioning(ca), kb = model.dit().project_conditioning(cb);
  const std::size_t n = ca.prompt_length;
  for (std::size_t blk = 0; blk < ka.keys.size(); ++blk) {
    CHECK(values(ops::slice(ka.keys[blk], 0, 0, n)) == values(ops::slice(kb.keys[blk], 0, 0, n)));
  }
}

TEST_CASE("flow interpolant and loss") {
  SeededRng rng(4);
  const Tensor x_w = image_to_tensor(render(random_scene(rng)));
  const Tensor eps = gaussian_like(x_w.shape(), rng);
  CHECK(values(interpolate(x_w, eps, 0.0)) == values(x_w));
  CHECK(values(interpolate(x_w, eps, 1.0)) == values(eps));

  for (int i = 0; i < 20; ++i) {
    const FlowSample s = draw_flow_sample(x_w, rng);
    CHECK(s.t > 0.0);
    CHECK(s.t < 1.0);
    const Tensor oracle = flow_loss([&](const Tensor&, double) { return s.target; }, s);
    CHECK(std::abs(oracle.item()) < 1e-10);

    const Tensor zero = flow_loss([&](const Tensor& x, double) { return Tensor::zeros(x.shape()); }, s);
    double direct = 0;
    for (std::size_t k = 0; k < x_w.numel(); ++k) {
      const double r = static_cast<double>(s.eps.data()[k]) - x_w.data()[k];
      direct += r * r;
    }
    direct /= static_cast<double>(x_w.numel());
    CHECK(zero.item() == doctest::Approx(direct).epsilon(1e-6));
    CHECK(zero.item() >= 0.0);
  }
  const FlowSample w = draw_flow_sample(x_w, rng, TimeMode::kWeighted);
  CHECK(w.weight == doctest::Approx(logit_normal_pdf(w.t)));
}

TEST_CASE("euler sampler exactness and guidance") {
  SeededRng scene_rng(5);
  const Image target = render(random_scene(scene_rng));
  const Tensor x_w = image_to_tensor(target);
  for (int steps : {1, 5, 20}) {
    SeededRng rng(6);
    Tensor eps;
    const VelocityFn oracle = [&](const Tensor& x, double t) {
      if (t == 1.0) eps = x.detach();
      return ops::sub(eps, x_w);
    };
    const Tensor x1 = gaussian_like(x_w.shape(), rng);
    const Tensor out = euler_integrate(x1, oracle, oracle, steps, 3.0);
    double err = 0;
    for (std::size_t k = 0; k < out.numel(); ++k) err = std::max(err, std::abs(static_cast<double>(out.data()[k]) - x_w.data()[k]));
    CHECK(err < 1e-5);

    SeededRng rng2(6);
    const Image img = euler_sample(oracle, oracle, steps, 3.0, rng2);
    double ierr = 0;
    for (std::size_t k = 0; k < img.pixels.size(); ++k) ierr = std::max(ierr, std::abs(static_cast<double>(img.pixels[k]) - target.pixels[k]));
    CHECK(ierr < 1e-5);
  }

  const VelocityFn uncond = [](const Tensor& x, double t) { return ops::scale(x, t * 0.5); };
  const VelocityFn c1 = [](const Tensor& x, double) { return ops::scale(x, 2.0); };
  const VelocityFn c2 = [](const Tensor& x, double) { return ops::scale(x, -1.0); };
  SeededRng r1(7), r2(7);
  CHECK(euler_sample(c1, uncond, 10, 0.0, r1) == euler_sample(c2, uncond, 10, 0.0, r2));
  SeededRng r3(7), r4(7);
  CHECK(euler_sample(c1, uncond, 10, 3.0, r3) == euler_sample(c1, uncond, 10, 3.0, r4));
  SeededRng r5(7);
  CHECK_THROWS_AS(euler_sample(c1, uncond, 0, 3.0, r5), Error);
}

TEST_CASE("context encoder token counts") {
  ReflectModel model(tiny_spec(true));
  const auto& ctx = model.context();
  const ContextItem a = item_for(1, "There is no red circle in the image.");
  CHECK(ctx.encode_image(a.image).shape() == Shape{16, 16});
  CHECK(values(ctx.encode_image(a.image)) == values(ctx.encode_image(a.image)));

  const TokenSeq null_fb = tokenize(kNullFeedback);
  const Tensor e = ctx.encode_feedback(null_fb);
  CHECK(e.dim(0) == null_fb.length);
  CHECK(e.dim(0) > 0);
  CHECK(values(ctx.encode_feedback(null_fb)) == values(e));

  const Tensor features = ctx.frozen_features(a.image);
  const Tensor pooled = ops::mean_pool2d(features, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 8; ++k) {
        double acc = 0;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) acc += features.data()[((2 * i + di) * 8 + 2 * j + dj) * 8 + k];
        CHECK(pooled.data()[(i * 4 + j) * 8 + k] == doctest::Approx(acc / 4).epsilon(1e-5));
      }

  std::vector<ContextItem> items;
  CHECK_FALSE(ctx.context_transform(items).defined());
  std::size_t expected = 0;
  for (int n = 1; n <= 3; ++n) {
    items.push_back(item_for(static_cast<std::uint64_t>(n), n == 2 ? std::string(kNullFeedback)
                                                                     : "The cross should be above the circle."));
    expected += 16 + items.back().feedback.length;
    const Tensor m = ctx.context_transform(items);
    CHECK(m.dim(0) == expected);
    CHECK(ctx.sequence_length(items) == expected);
  }
  items.push_back(a);
  CHECK_THROWS_AS(ctx.context_transform(items), Error);

  ContextConfig small = *tiny_spec(true).context;
  small.pool_window = 4;
  ModelSpec spec = tiny_spec(true);
  spec.context = small;
  ReflectModel coarse(spec);
  CHECK(coarse.context().encode_image(a.image).dim(0) == 4);
}

TEST_CASE("context transformer associates images with feedback") {
  ReflectModel model(tiny_spec(true));
  randomize(model.params(), 8);
  const auto& ctx = model.context();
  const std::vector<ContextItem> items{item_for(1, "There is no red circle in the image.")};
  const Tensor m = ctx.embed_sequence(items);
  const Tensor out = ctx.transform(m);
  std::vector<real> zeroed = values(m);
  std::fill(zeroed.begin(), zeroed.begin() + 16 * 16, real(0));
  const Tensor out2 = ctx.transform(Tensor::from(m.shape(), zeroed));
  const auto e_row = values(ops::slice(out, 0, 16, 17));
  const auto e_row2 = values(ops::slice(out2, 0, 16, 17));
  CHECK(e_row != e_row2);
}

TEST_CASE("pad entries do not reach the context") {
  ReflectModel model(tiny_spec(true));
  ContextItem a = item_for(1, "There is no red circle in the image.");
  ContextItem b = a;
  for (std::size_t i = b.feedback.length; i < kMaxTokens; ++i) b.feedback.ids[i] = kPadId;
  const std::vector<ContextItem> ia{a}, ib{b};
  CHECK(values(model.context().context_transform(ia)) == values(model.context().context_transform(ib)));
}

TEST_CASE("gradient reaches trained context parameters only") {
  ReflectModel model(tiny_spec(true));
  randomize(model.params(), 9);
  const std::vector<ContextItem> items{item_for(1, "There is no red circle in the image."),
                                       item_for(2, "There is no blue square in the image.")};
  SeededRng rng(10);
  const Tensor x = gaussian_like({32, 32, 3}, rng);
  const auto cond = model.condition(tokenize("a red circle"), items);
  backward(ops::mean(model.dit().forward(x, 0.4, cond)));
  auto nonzero = [&](const std::string& name) {
    const Tensor& t = model.params().get(name);
    if (!t.has_grad()) return false;
    for (real g : t.grad()) {
      if (g != 0) return true;
    }
    return false;
  };
  CHECK_FALSE(nonzero("ctx.frozen.patch"));
  CHECK_FALSE(model.params().get("ctx.frozen.patch").requires_grad());
  CHECK(nonzero("ctx.proj.in.w"));
  CHECK(nonzero("ctx.proj.norm"));
  CHECK(nonzero("ctx.tf.layer0.qkv.w"));
  CHECK(nonzero("ctx.tf.layer1.down.w"));
  CHECK(nonzero("text.embed"));
}

TEST_CASE("build_conditioning") {
  const Tensor p = Tensor::full({4, 16}, real(1));
  const auto only = build_conditioning(p, {});
  CHECK(only.sequence.impl() == p.impl());
  CHECK(only.prompt_length == 4);
  CHECK(only.context_length == 0);
  const auto both = build_conditioning(p, Tensor::zeros({7, 16}));
  CHECK(both.sequence.dim(0) == 11);
  CHECK(both.prompt_length == 4);
  CHECK_THROWS_AS(build_conditioning(p, Tensor::zeros({7, 8})), Error);
}

TEST_CASE("model checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "rdit_model_test";
  std::filesystem::create_directories(dir);
  ReflectModel base(tiny_spec(false));
  randomize(base.params(), 11);
  base.save(dir / "base.rflt", {{"kind", "pretrain"}});

  // Base weights carried over, context parameters fresh from the seed.
  const auto ctx_cfg = *tiny_spec(true).context;
  auto reflect = ReflectModel::load(dir / "base.rflt", ctx_cfg);
  ReflectModel fresh(tiny_spec(true));
  for (const auto& e : reflect->params().entries()) {
    const bool is_ctx = e.name.rfind("ctx.", 0) == 0;
    const Tensor& ref = is_ctx ? fresh.params().get(e.name) : base.params().get(e.name);
    CHECK(values(e.tensor) == values(ref));
  }

  const ContextItem a = item_for(3, "There is no red circle in the image.");
  const auto v_before = values(reflect->context().encode_image(a.image));
  reflect->save(dir / "reflect.rflt");
  nlohmann::json meta;
  auto again = ReflectModel::load(dir / "reflect.rflt", std::nullopt, &meta);
  CHECK(again->has_context());
  CHECK(values(again->context().encode_image(a.image)) == v_before);
  CHECK(meta.at("model").at("context").at("frozen_seed") == ctx_cfg.frozen_seed);

  ContextConfig other = ctx_cfg;
  other.depth = 1;
  CHECK_THROWS_AS(ReflectModel::load(dir / "reflect.rflt", other), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training losses are reproducible") {
  auto run = [] {
    ReflectModel model(tiny_spec(false));
    AdamW opt(model.params().trainable(), {.lr = 1e-3});
    SeededRng rng(12);
    const Tensor x_w = image_to_tensor(render(random_scene(rng)));
    const auto prompt = tokenize("a red circle");
    std::vector<double> losses;
    for (int step = 0; step < 100; ++step) {
      opt.zero_grad();
      const auto cond = model.condition(prompt, {});
      const Tensor loss = flow_loss([&](const Tensor& x, double t) { return model.dit().forward(x, t, cond); }, x_w, rng);
      losses.push_back(loss.item());
      backward(loss);
      opt.step();
    }
    return losses;
  };
  const auto a = run(), b = run();
  CHECK(a == b);
}
