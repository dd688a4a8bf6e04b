// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <string>

#include "rdit/world.hpp"

namespace rdit {

namespace {

int count_of(const SceneGraph& s, ShapeKind shape, std::optional<Color> color) {
  return static_cast<int>(std::count_if(s.objects.begin(), s.objects.end(), [&](const SceneObject& o) {
    return o.shape == shape && (!color || o.color == *color);
  }));
}

std::optional<Color> first_wrong_color(const SceneGraph& s, ShapeKind shape, Color wanted) {
  for (const auto& o : s.objects) {
    if (o.shape == shape && o.color != wanted) return o.color;
  }
  return std::nullopt;
}

bool relation_holds(Relation rel, const SceneObject& a, const SceneObject& b) {
  switch (rel) {
    case Relation::kLeftOf: return a.col < b.col;
    case Relation::kRightOf: return a.col > b.col;
    case Relation::kAbove: return a.row < b.row;
    case Relation::kBelow: return a.row > b.row;
  }
  return false;
}

Violation missing(ShapeKind shape, std::optional<Color> color) {
  Violation v;
  v.kind = ViolationKind::kMissing;
  v.shape = shape;
  v.color = color;
  return v;
}

// Demanded (shape, color) object: present, wrongly colored, or missing.
void check_colored(const SceneGraph& s, ShapeKind shape, Color color, std::vector<Violation>& out) {
  if (count_of(s, shape, color) > 0) return;
  if (auto wrong = first_wrong_color(s, shape, color)) {
    Violation v;
    v.kind = ViolationKind::kColor;
    v.shape = shape;
    v.color = color;
    v.actual_color = *wrong;
    out.push_back(v);
    return;
  }
  out.push_back(missing(shape, color));
}

std::string phrase(ShapeKind shape, std::optional<Color> color) {
  std::string p;
  if (color) p = std::string(color_name(*color)) + " ";
  return p + std::string(shape_name(shape));
}

}  // namespace

std::vector<Violation> scene_violations(const PromptSpec& spec, const SceneGraph& scene) {
  std::vector<Violation> out;
  switch (spec.category) {
    case Category::kSingle:
      check_colored(scene, spec.shape_a, *spec.color_a, out);
      break;
    case Category::kTwo:
      if (count_of(scene, spec.shape_a, std::nullopt) == 0) out.push_back(missing(spec.shape_a, std::nullopt));
      if (count_of(scene, spec.shape_b, std::nullopt) == 0) out.push_back(missing(spec.shape_b, std::nullopt));
      break;
    case Category::kCounting: {
      const int found = count_of(scene, spec.shape_a, spec.color_a);
      if (found == 0) {
        out.push_back(missing(spec.shape_a, spec.color_a));
      } else if (found != spec.count) {
        Violation v;
        v.kind = ViolationKind::kCount;
        v.shape = spec.shape_a;
        v.color = spec.color_a;
        v.expected = spec.count;
        v.found = found;
        out.push_back(v);
      }
      break;
    }
    case Category::kColor:
      if (count_of(scene, spec.shape_a, std::nullopt) == 0) {
        out.push_back(missing(spec.shape_a, spec.color_a));
      } else if (auto wrong = first_wrong_color(scene, spec.shape_a, *spec.color_a)) {
        Violation v;
        v.kind = ViolationKind::kColor;
        v.shape = spec.shape_a;
        v.color = spec.color_a;
        v.actual_color = *wrong;
        out.push_back(v);
      }
      break;
    case Category::kPosition: {
      const bool has_a = count_of(scene, spec.shape_a, std::nullopt) > 0;
      const bool has_b = count_of(scene, spec.shape_b, std::nullopt) > 0;
      if (!has_a) out.push_back(missing(spec.shape_a, std::nullopt));
      if (!has_b) out.push_back(missing(spec.shape_b, std::nullopt));
      if (has_a && has_b) {
        bool ok = false;
        for (const auto& a : scene.objects) {
          for (const auto& b : scene.objects) {
            if (a.shape == spec.shape_a && b.shape == spec.shape_b && relation_holds(spec.relation, a, b)) ok = true;
          }
        }
        if (!ok) {
          Violation v;
          v.kind = ViolationKind::kPosition;
          v.shape = spec.shape_a;
          v.relation = spec.relation;
          v.other = spec.shape_b;
          out.push_back(v);
        }
      }
      break;
    }
    case Category::kAttribution:
      check_colored(scene, spec.shape_a, *spec.color_a, out);
      check_colored(scene, spec.shape_b, *spec.color_b, out);
      break;
  }
  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.kind < b.kind; });
  return out;
}

// Direct pass predicate, written independently of the violation logic.
bool score_scene(const PromptSpec& spec, const SceneGraph& scene) {
  auto has = [&](ShapeKind shape, std::optional<Color> color) {
    return std::any_of(scene.objects.begin(), scene.objects.end(),
                       [&](const SceneObject& o) { return o.shape == shape && (!color || o.color == *color); });
  };
  switch (spec.category) {
    case Category::kSingle: return has(spec.shape_a, spec.color_a);
    case Category::kTwo: return has(spec.shape_a, std::nullopt) && has(spec.shape_b, std::nullopt);
    case Category::kCounting: return count_of(scene, spec.shape_a, spec.color_a) == spec.count;
    case Category::kColor:
      return has(spec.shape_a, std::nullopt) &&
             std::all_of(scene.objects.begin(), scene.objects.end(),
                         [&](const SceneObject& o) { return o.shape != spec.shape_a || o.color == *spec.color_a; });
    case Category::kPosition:
      for (const auto& a : scene.objects) {
        if (a.shape != spec.shape_a) continue;
        for (const auto& b : scene.objects) {
          if (b.shape == spec.shape_b && relation_holds(spec.relation, a, b)) return true;
        }
      }
      return false;
    case Category::kAttribution: return has(spec.shape_a, spec.color_a) && has(spec.shape_b, spec.color_b);
  }
  return false;
}

std::string render_violation(const Violation& v) {
  switch (v.kind) {
    case ViolationKind::kMissing:
      return "There is no " + phrase(v.shape, v.color) + " in the image.";
    case ViolationKind::kCount:
      return "There should be " + std::to_string(v.expected) + " " + phrase(v.shape, v.color) +
             " in the image, but only " + std::to_string(v.found) + " exist.";
    case ViolationKind::kColor:
      return "The " + std::string(shape_name(v.shape)) + " should be " + std::string(color_name(*v.color)) +
             ", but it is " + std::string(color_name(v.actual_color)) + ".";
    case ViolationKind::kPosition:
      return "The " + std::string(shape_name(v.shape)) + " should be " + std::string(relation_phrase(v.relation)) +
             " the " + std::string(shape_name(v.other)) + ".";
  }
  return {};
}

FeedbackRecord make_feedback(std::vector<Violation> violations) {
  FeedbackRecord fb;
  if (violations.size() > kMaxViolations) violations.resize(kMaxViolations);
  fb.violations = std::move(violations);
  fb.is_null = fb.violations.empty();
  if (fb.is_null) {
    fb.text = std::string(kNullFeedback);
    return fb;
  }
  for (std::size_t i = 0; i < fb.violations.size(); ++i) {
    if (i) fb.text += ' ';
    fb.text += render_violation(fb.violations[i]);
  }
  return fb;
}

FeedbackRecord judge_feedback(const PromptSpec& spec, const Image& image) {
  return make_feedback(scene_violations(spec, detect(image)));
}

bool score_prompt(const PromptSpec& spec, const Image& image) { return score_scene(spec, detect(image)); }

}  // namespace rdit
