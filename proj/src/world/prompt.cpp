// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>

#include "rdit/error.hpp"
#include "rdit/hash.hpp"
#include "rdit/world.hpp"

namespace rdit {

std::string_view shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kCross: return "cross";
  }
  return "?";
}

std::string_view shape_plural(ShapeKind s) {
  switch (s) {
    case ShapeKind::kCircle: return "circles";
    case ShapeKind::kSquare: return "squares";
    case ShapeKind::kTriangle: return "triangles";
    case ShapeKind::kCross: return "crosses";
  }
  return "?";
}

std::string_view color_name(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
  }
  return "?";
}

std::string_view relation_phrase(Relation r) {
  switch (r) {
    case Relation::kLeftOf: return "left of";
    case Relation::kRightOf: return "right of";
    case Relation::kAbove: return "above";
    case Relation::kBelow: return "below";
  }
  return "?";
}

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kSingle: return "single";
    case Category::kTwo: return "two";
    case Category::kCounting: return "counting";
    case Category::kColor: return "color";
    case Category::kPosition: return "position";
    case Category::kAttribution: return "attribution";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

std::array<float, 3> palette_rgb(Color c) {
  switch (c) {
    case Color::kRed: return {1.0f, 0.0f, 0.0f};
    case Color::kGreen: return {0.0f, 1.0f, 0.0f};
    case Color::kBlue: return {0.0f, 0.0f, 1.0f};
    case Color::kYellow: return {1.0f, 1.0f, 0.0f};
  }
  return {0.0f, 0.0f, 0.0f};
}

namespace {

std::string_view count_word(int n) {
  switch (n) {
    case 2: return "two";
    case 3: return "three";
    case 4: return "four";
    default: return "?";
  }
}

PromptSpec finish(PromptSpec spec, std::string text) {
  spec.text = std::move(text);
  spec.id = fnv1a64(spec.text, fnv1a64(category_name(spec.category)));
  return spec;
}

void require_distinct(ShapeKind a, ShapeKind b) {
  if (a == b) fail(ErrorKind::kData, "prompt grammar needs two distinct shapes");
}

}  // namespace

PromptSpec make_single(ShapeKind shape, Color color) {
  PromptSpec p;
  p.category = Category::kSingle;
  p.shape_a = shape;
  p.color_a = color;
  return finish(p, "a " + std::string(color_name(color)) + " " + std::string(shape_name(shape)));
}

PromptSpec make_two(ShapeKind a, ShapeKind b) {
  require_distinct(a, b);
  PromptSpec p;
  p.category = Category::kTwo;
  p.shape_a = a;
  p.shape_b = b;
  return finish(p, "a " + std::string(shape_name(a)) + " and a " + std::string(shape_name(b)));
}

PromptSpec make_counting(int count, ShapeKind shape, Color color) {
  if (count < 2 || count > 4) fail(ErrorKind::kData, "counting prompts use counts 2..4");
  PromptSpec p;
  p.category = Category::kCounting;
  p.count = count;
  p.shape_a = shape;
  p.color_a = color;
  return finish(p, std::string(count_word(count)) + " " + std::string(color_name(color)) + " " +
                       std::string(shape_plural(shape)));
}

PromptSpec make_color(ShapeKind shape, Color color) {
  PromptSpec p;
  p.category = Category::kColor;
  p.shape_a = shape;
  p.color_a = color;
  return finish(p, "a " + std::string(shape_name(shape)) + " colored " + std::string(color_name(color)));
}

PromptSpec make_position(ShapeKind a, Relation rel, ShapeKind b) {
  require_distinct(a, b);
  PromptSpec p;
  p.category = Category::kPosition;
  p.shape_a = a;
  p.shape_b = b;
  p.relation = rel;
  return finish(p, "a " + std::string(shape_name(a)) + " " + std::string(relation_phrase(rel)) + " a " +
                       std::string(shape_name(b)));
}

PromptSpec make_attribution(ShapeKind a, Color ca, ShapeKind b, Color cb) {
  require_distinct(a, b);
  PromptSpec p;
  p.category = Category::kAttribution;
  p.shape_a = a;
  p.color_a = ca;
  p.shape_b = b;
  p.color_b = cb;
  return finish(p, "a " + std::string(color_name(ca)) + " " + std::string(shape_name(a)) + " and a " +
                       std::string(color_name(cb)) + " " + std::string(shape_name(b)));
}

std::vector<PromptSpec> enumerate_prompts(Category category) {
  std::vector<PromptSpec> out;
  switch (category) {
    case Category::kSingle:
      for (ShapeKind s : kAllShapes)
        for (Color c : kAllColors) out.push_back(make_single(s, c));
      break;
    case Category::kTwo:
      for (ShapeKind a : kAllShapes)
        for (ShapeKind b : kAllShapes)
          if (a != b) out.push_back(make_two(a, b));
      break;
    case Category::kCounting:
      for (int n = 2; n <= 4; ++n)
        for (ShapeKind s : kAllShapes)
          for (Color c : kAllColors) out.push_back(make_counting(n, s, c));
      break;
    case Category::kColor:
      for (ShapeKind s : kAllShapes)
        for (Color c : kAllColors) out.push_back(make_color(s, c));
      break;
    case Category::kPosition:
      for (ShapeKind a : kAllShapes)
        for (Relation r : kAllRelations)
          for (ShapeKind b : kAllShapes)
            if (a != b) out.push_back(make_position(a, r, b));
      break;
    case Category::kAttribution:
      for (ShapeKind a : kAllShapes)
        for (Color ca : kAllColors)
          for (ShapeKind b : kAllShapes)
            for (Color cb : kAllColors)
              if (a != b) out.push_back(make_attribution(a, ca, b, cb));
      break;
  }
  return out;
}

namespace {

template <class T, std::size_t N>
T pick(const std::array<T, N>& values, SeededRng& rng) {
  return values[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(N) - 1))];
}

std::pair<ShapeKind, ShapeKind> pick_two_shapes(SeededRng& rng) {
  const ShapeKind a = pick(kAllShapes, rng);
  ShapeKind b = a;
  while (b == a) b = pick(kAllShapes, rng);
  return {a, b};
}

}  // namespace

PromptSpec sample_prompt(Category category, SeededRng& rng) {
  switch (category) {
    case Category::kSingle: {
      const ShapeKind s = pick(kAllShapes, rng);
      return make_single(s, pick(kAllColors, rng));
    }
    case Category::kTwo: {
      const auto [a, b] = pick_two_shapes(rng);
      return make_two(a, b);
    }
    case Category::kCounting: {
      const int n = rng.uniform_int(2, 4);
      const ShapeKind s = pick(kAllShapes, rng);
      return make_counting(n, s, pick(kAllColors, rng));
    }
    case Category::kColor: {
      const ShapeKind s = pick(kAllShapes, rng);
      return make_color(s, pick(kAllColors, rng));
    }
    case Category::kPosition: {
      const auto [a, b] = pick_two_shapes(rng);
      return make_position(a, pick(kAllRelations, rng), b);
    }
    case Category::kAttribution: {
      const auto [a, b] = pick_two_shapes(rng);
      const Color ca = pick(kAllColors, rng);
      return make_attribution(a, ca, b, pick(kAllColors, rng));
    }
  }
  fail(ErrorKind::kData, "unknown category");
}

nlohmann::json prompt_to_json(const PromptSpec& spec) {
  nlohmann::json j;
  j["category"] = category_name(spec.category);
  j["text"] = spec.text;
  j["id"] = hex64(spec.id);
  j["shape_a"] = shape_name(spec.shape_a);
  if (spec.color_a) j["color_a"] = color_name(*spec.color_a);
  if (spec.category == Category::kTwo || spec.category == Category::kPosition ||
      spec.category == Category::kAttribution) {
    j["shape_b"] = shape_name(spec.shape_b);
  }
  if (spec.color_b) j["color_b"] = color_name(*spec.color_b);
  if (spec.category == Category::kCounting) j["count"] = spec.count;
  if (spec.category == Category::kPosition) j["relation"] = relation_phrase(spec.relation);
  return j;
}

namespace {

template <class T, std::size_t N, class F>
T parse_named(const std::array<T, N>& values, F name_of, const std::string& s, const char* what) {
  for (T v : values) {
    if (name_of(v) == s) return v;
  }
  fail(ErrorKind::kFormat, std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

PromptSpec prompt_from_json(const nlohmann::json& j) {
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) fail(ErrorKind::kFormat, "unknown category " + j.at("category").dump());
  auto shape = [&](const char* key) { return parse_named(kAllShapes, shape_name, j.at(key).get<std::string>(), "shape"); };
  auto color = [&](const char* key) { return parse_named(kAllColors, color_name, j.at(key).get<std::string>(), "color"); };
  PromptSpec p;
  switch (*cat) {
    case Category::kSingle: p = make_single(shape("shape_a"), color("color_a")); break;
    case Category::kTwo: p = make_two(shape("shape_a"), shape("shape_b")); break;
    case Category::kCounting: p = make_counting(j.at("count").get<int>(), shape("shape_a"), color("color_a")); break;
    case Category::kColor: p = make_color(shape("shape_a"), color("color_a")); break;
    case Category::kPosition:
      p = make_position(shape("shape_a"),
                        parse_named(kAllRelations, relation_phrase, j.at("relation").get<std::string>(), "relation"),
                        shape("shape_b"));
      break;
    case Category::kAttribution:
      p = make_attribution(shape("shape_a"), color("color_a"), shape("shape_b"), color("color_b"));
      break;
  }
  if (j.contains("text") && j.at("text").get<std::string>() != p.text) {
    fail(ErrorKind::kFormat, "prompt text '" + j.at("text").get<std::string>() + "' disagrees with its constraints");
  }
  return p;
}

}  // namespace rdit
