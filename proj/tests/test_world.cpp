// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <set>
#include <unordered_set>

#include "doctest.h"
#include "rdit/error.hpp"
#include "rdit/world.hpp"

using namespace rdit;

namespace {

SceneGraph scene_of(std::vector<SceneObject> objects) {
  SceneGraph s;
  s.objects = std::move(objects);
  s.canonicalize();
  return s;
}

// Exhaustive violation enumeration over the constraint space.
std::vector<Violation> all_violations() {
  std::vector<Violation> out;
  for (ShapeKind s : kAllShapes) {
    Violation m;
    m.kind = ViolationKind::kMissing;
    m.shape = s;
    out.push_back(m);
    for (Color c : kAllColors) {
      m.color = c;
      out.push_back(m);
      for (int expected = 2; expected <= 4; ++expected) {
        // detection is not capped, so counts run to a full grid
        for (int found = 1; found <= kGrid * kGrid; ++found) {
          if (found == expected) continue;
          Violation v;
          v.kind = ViolationKind::kCount;
          v.shape = s;
          v.color = c;
          v.expected = expected;
          v.found = found;
          out.push_back(v);
        }
      }
      for (Color actual : kAllColors) {
        if (actual == c) continue;
        Violation v;
        v.kind = ViolationKind::kColor;
        v.shape = s;
        v.color = c;
        v.actual_color = actual;
        out.push_back(v);
      }
    }
    for (Relation r : kAllRelations) {
      for (ShapeKind o : kAllShapes) {
        if (o == s) continue;
        Violation v;
        v.kind = ViolationKind::kPosition;
        v.shape = s;
        v.relation = r;
        v.other = o;
        out.push_back(v);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("prompt surface forms") {
  CHECK(make_single(ShapeKind::kCircle, Color::kRed).text == "a red circle");
  CHECK(make_counting(3, ShapeKind::kSquare, Color::kBlue).text == "three blue squares");
  CHECK(make_two(ShapeKind::kCircle, ShapeKind::kSquare).text == "a circle and a square");
  CHECK(make_color(ShapeKind::kTriangle, Color::kGreen).text == "a triangle colored green");
  CHECK(make_position(ShapeKind::kCross, Relation::kLeftOf, ShapeKind::kSquare).text == "a cross left of a square");
  CHECK(make_attribution(ShapeKind::kCircle, Color::kRed, ShapeKind::kSquare, Color::kBlue).text ==
        "a red circle and a blue square");
  CHECK_THROWS_AS(make_two(ShapeKind::kCircle, ShapeKind::kCircle), Error);
  CHECK_THROWS_AS(make_counting(1, ShapeKind::kCircle, Color::kRed), Error);
}

TEST_CASE("grammar capacity and stable ids") {
  const std::size_t expected[] = {16, 12, 48, 16, 48, 192};
  std::unordered_set<std::uint64_t> ids;
  std::size_t total = 0;
  for (Category c : kAllCategories) {
    const auto all = enumerate_prompts(c);
    CHECK(all.size() == expected[static_cast<int>(c)]);
    for (const auto& p : all) {
      ids.insert(p.id);
      CHECK(prompt_from_json(prompt_to_json(p)) == p);
      CHECK(detokenize(tokenize(p.text)) == p.text);
    }
    total += all.size();
  }
  CHECK(ids.size() == total);
  CHECK(make_single(ShapeKind::kCircle, Color::kRed).id == make_single(ShapeKind::kCircle, Color::kRed).id);
}

TEST_CASE("position relations are uniform") {
  SeededRng rng(1);
  int counts[4] = {};
  for (int i = 0; i < 10000; ++i) ++counts[static_cast<int>(sample_prompt(Category::kPosition, rng).relation)];
  for (int c : counts) CHECK(std::abs(c / 10000.0 - 0.25) < 0.02);
}

TEST_CASE("render basics") {
  const Image empty = render(SceneGraph{});
  for (float v : empty.pixels) CHECK(v == 0.0f);
  CHECK(detect(empty).objects.empty());

  const Image one = render(scene_of({{ShapeKind::kCircle, Color::kRed, 0, 0}}));
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      const bool lit = one.at(y, x, 0) > 0.0f;
      if (lit) {
        CHECK(y < kCellSize);
        CHECK(x < kCellSize);
        CHECK(one.at(y, x, 1) == 0.0f);
        CHECK(one.at(y, x, 2) == 0.0f);
      }
    }
  CHECK(render(scene_of({{ShapeKind::kCircle, Color::kRed, 0, 0}})) == one);
}

TEST_CASE("glyph fill ratios sit inside the detector bands") {
  CHECK(glyph_fill_ratio(ShapeKind::kSquare) >= 0.95);
  CHECK(glyph_fill_ratio(ShapeKind::kCircle) >= 0.70);
  CHECK(glyph_fill_ratio(ShapeKind::kCircle) <= 0.85);
  CHECK(glyph_fill_ratio(ShapeKind::kTriangle) >= 0.40);
  CHECK(glyph_fill_ratio(ShapeKind::kTriangle) <= 0.60);
  CHECK(glyph_fill_ratio(ShapeKind::kCross) >= 0.15);
  CHECK(glyph_fill_ratio(ShapeKind::kCross) <= 0.40);
}

TEST_CASE("detect inverts render and renders are injective") {
  SeededRng rng(2026);
  std::set<SceneGraph, bool (*)(const SceneGraph&, const SceneGraph&)> scenes(
      [](const SceneGraph& a, const SceneGraph& b) { return a.objects < b.objects; });
  std::unordered_set<std::uint64_t> hashes;
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const SceneGraph s = random_scene(rng);
    REQUIRE(s.valid());
    const Image img = render(s);
    if (!(detect(img) == s)) ++failures;
    if (scenes.insert(s).second) hashes.insert(image_hash(img));
  }
  CHECK(failures == 0);
  CHECK(hashes.size() == scenes.size());
}

TEST_CASE("detect survives mild pixel noise") {
  SeededRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int row = rng.uniform_int(0, 3), col = rng.uniform_int(0, 3);
    const SceneGraph s = scene_of({{ShapeKind::kSquare, Color::kRed, row, col}});
    Image img = render(s);
    for (float& v : img.pixels) v = std::clamp(v + static_cast<float>(rng.uniform() * 0.1 - 0.05), 0.0f, 1.0f);
    CHECK(detect(img) == s);
  }
}

TEST_CASE("sample_scene honours satisfy") {
  SeededRng rng(4);
  for (Category c : kAllCategories) {
    for (int i = 0; i < 300; ++i) {
      const PromptSpec spec = sample_prompt(c, rng);
      const SceneGraph good = sample_scene(spec, rng, true);
      const SceneGraph bad = sample_scene(spec, rng, false);
      REQUIRE(good.valid());
      REQUIRE(bad.valid());
      CHECK(score_prompt(spec, render(good)));
      CHECK_FALSE(score_prompt(spec, render(bad)));
    }
  }
  const PromptSpec two_red = make_counting(2, ShapeKind::kCircle, Color::kRed);
  for (int i = 0; i < 200; ++i) {
    const SceneGraph s = sample_scene(two_red, rng, false);
    int n = 0;
    for (const auto& o : s.objects) n += o.shape == ShapeKind::kCircle && o.color == Color::kRed;
    CHECK(n != 2);
  }
  const PromptSpec pos = make_position(ShapeKind::kCircle, Relation::kLeftOf, ShapeKind::kSquare);
  for (int i = 0; i < 1000; ++i) CHECK(score_prompt(pos, render(sample_scene(pos, rng, true))));
}

TEST_CASE("swapped relation fails") {
  const PromptSpec pos = make_position(ShapeKind::kCircle, Relation::kLeftOf, ShapeKind::kSquare);
  const SceneGraph ok = scene_of({{ShapeKind::kCircle, Color::kRed, 1, 0}, {ShapeKind::kSquare, Color::kBlue, 1, 2}});
  const SceneGraph swapped =
      scene_of({{ShapeKind::kSquare, Color::kRed, 1, 0}, {ShapeKind::kCircle, Color::kBlue, 1, 2}});
  CHECK(score_prompt(pos, render(ok)));
  CHECK_FALSE(score_prompt(pos, render(swapped)));
  CHECK(judge_feedback(pos, render(swapped)).text == "The circle should be left of the square.");
}

TEST_CASE("judge templates") {
  const PromptSpec red_circle = make_single(ShapeKind::kCircle, Color::kRed);
  const auto ok = judge_feedback(red_circle, render(scene_of({{ShapeKind::kCircle, Color::kRed, 2, 2}})));
  CHECK(ok.is_null);
  CHECK(ok.text == "This image is correct.");

  const auto miss = judge_feedback(red_circle, render(scene_of({{ShapeKind::kSquare, Color::kBlue, 0, 0}})));
  CHECK(miss.text == "There is no red circle in the image.");

  const PromptSpec three = make_counting(3, ShapeKind::kSquare, Color::kBlue);
  const auto count = judge_feedback(
      three, render(scene_of({{ShapeKind::kSquare, Color::kBlue, 0, 0}, {ShapeKind::kSquare, Color::kBlue, 3, 3}})));
  CHECK(count.text == "There should be 3 blue square in the image, but only 2 exist.");

  const PromptSpec colored = make_color(ShapeKind::kTriangle, Color::kGreen);
  const auto wrong = judge_feedback(colored, render(scene_of({{ShapeKind::kTriangle, Color::kYellow, 1, 1}})));
  CHECK(wrong.text == "The triangle should be green, but it is yellow.");

  const PromptSpec attr = make_attribution(ShapeKind::kCircle, Color::kRed, ShapeKind::kSquare, Color::kBlue);
  const auto two = judge_feedback(attr, render(scene_of({{ShapeKind::kSquare, Color::kGreen, 1, 1}})));
  REQUIRE(two.violations.size() == 2);
  CHECK(two.violations[0].kind == ViolationKind::kMissing);
  CHECK(two.violations[1].kind == ViolationKind::kColor);
}

TEST_CASE("judge and scorer agree") {
  SeededRng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const PromptSpec spec = sample_prompt(kAllCategories[static_cast<std::size_t>(rng.uniform_int(0, 5))], rng);
    const SceneGraph s = rng.bernoulli(0.5) ? random_scene(rng) : sample_scene(spec, rng, rng.bernoulli(0.5));
    const Image img = render(s);
    const auto fb = judge_feedback(spec, img);
    CHECK(fb.is_null == score_prompt(spec, img));
    CHECK(fb.is_null == fb.violations.empty());
    CHECK(fb.is_null == (fb.text == kNullFeedback));
    CHECK(fb.violations.size() <= kMaxViolations);
  }
}

TEST_CASE("tokenizer round trips") {
  const TokenSeq empty = tokenize("");
  CHECK(empty.length == 2);
  CHECK(empty.ids[0] == kBosId);
  CHECK(empty.ids[1] == kEosId);
  CHECK(empty.ids[2] == kPadId);
  CHECK(detokenize(empty).empty());
  CHECK_THROWS_AS(tokenize("a purple circle"), Error);
  CHECK(detokenize(tokenize(kNullFeedback)) == kNullFeedback);

  const auto vs = all_violations();
  std::size_t longest = 0;
  for (const auto& a : vs) {
    const auto one = make_feedback({a});
    CHECK(detokenize(tokenize(one.text)) == one.text);
    longest = std::max(longest, tokenize(one.text).length);
  }
  // A crowded generated image: every cell holds a red circle.
  SceneGraph crowded;
  for (int r = 0; r < kGrid; ++r) {
    for (int c = 0; c < kGrid; ++c) crowded.objects.push_back({ShapeKind::kCircle, Color::kRed, r, c});
  }
  const auto crowded_fb = judge_feedback(make_counting(3, ShapeKind::kCircle, Color::kRed), render(crowded));
  CHECK(crowded_fb.violations.at(0).found == kGrid * kGrid);
  CHECK(detokenize(tokenize(crowded_fb.text)) == crowded_fb.text);

  // Only two-object prompts emit two violations, never a count one.
  for (const auto& a : vs) {
    if (a.kind == ViolationKind::kCount) continue;
    for (const auto& b : vs) {
      if (b.kind == ViolationKind::kCount) continue;
      const auto fb = make_feedback({a, b});
      const TokenSeq t = tokenize(fb.text);
      CHECK(t.length <= kMaxTokens);
      longest = std::max(longest, t.length);
    }
  }
  CHECK(longest <= kMaxTokens);
}

TEST_CASE("ppm round trip") {
  const auto path = std::filesystem::temp_directory_path() / "rdit_world_test.ppm";
  SeededRng rng(6);
  const Image img = render(random_scene(rng));
  write_ppm(path.string(), img);
  CHECK(read_ppm(path.string()) == img);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_ppm((path.string() + ".missing")), Error);
}
