// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

// The shape world: a closed prompt grammar over four shapes and four
// colors, scene sampling, a deterministic rasterizer, a pixel-space
// detector, the templated judge and the per-category scorer.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rdit/image.hpp"
#include "rdit/rng.hpp"

namespace rdit {

enum class ShapeKind : std::uint8_t { kCircle, kSquare, kTriangle, kCross };
enum class Color : std::uint8_t { kRed, kGreen, kBlue, kYellow };
enum class Relation : std::uint8_t { kLeftOf, kRightOf, kAbove, kBelow };
enum class Category : std::uint8_t { kSingle, kTwo, kCounting, kColor, kPosition, kAttribution };

inline constexpr int kGrid = 4;
inline constexpr int kCellSize = kImageSize / kGrid;
inline constexpr int kGlyphSize = 7;
inline constexpr int kMaxObjects = 6;
inline constexpr int kNumCategories = 6;
inline constexpr std::array<ShapeKind, 4> kAllShapes{ShapeKind::kCircle, ShapeKind::kSquare, ShapeKind::kTriangle,
                                                    ShapeKind::kCross};
inline constexpr std::array<Color, 4> kAllColors{Color::kRed, Color::kGreen, Color::kBlue, Color::kYellow};
inline constexpr std::array<Relation, 4> kAllRelations{Relation::kLeftOf, Relation::kRightOf, Relation::kAbove,
                                                       Relation::kBelow};
inline constexpr std::array<Category, 6> kAllCategories{Category::kSingle,   Category::kTwo,
                                                        Category::kCounting, Category::kColor,
                                                        Category::kPosition, Category::kAttribution};

std::string_view shape_name(ShapeKind s);
std::string_view shape_plural(ShapeKind s);
std::string_view color_name(Color c);
std::string_view relation_phrase(Relation r);
std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view name);
std::array<float, 3> palette_rgb(Color c);

// ---------------------------------------------------------------- prompts

struct PromptSpec {
  Category category = Category::kSingle;
  ShapeKind shape_a = ShapeKind::kCircle;
  std::optional<Color> color_a;
  ShapeKind shape_b = ShapeKind::kSquare;  // two, position, attribution
  std::optional<Color> color_b;            // attribution
  int count = 1;                           // counting: 2..4
  Relation relation = Relation::kLeftOf;   // position
  std::string text;
  std::uint64_t id = 0;

  bool operator==(const PromptSpec& o) const { return id == o.id && text == o.text; }
};

// Builds a prompt from constraints, validating them against the category
// grammar and rendering the canonical text and id.
PromptSpec make_single(ShapeKind shape, Color color);
PromptSpec make_two(ShapeKind a, ShapeKind b);
PromptSpec make_counting(int count, ShapeKind shape, Color color);
PromptSpec make_color(ShapeKind shape, Color color);
PromptSpec make_position(ShapeKind a, Relation rel, ShapeKind b);
PromptSpec make_attribution(ShapeKind a, Color ca, ShapeKind b, Color cb);

// Every legal prompt of a category, in a fixed order.
std::vector<PromptSpec> enumerate_prompts(Category category);
PromptSpec sample_prompt(Category category, SeededRng& rng);

nlohmann::json prompt_to_json(const PromptSpec& spec);
PromptSpec prompt_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------- scenes

struct SceneObject {
  ShapeKind shape = ShapeKind::kCircle;
  Color color = Color::kRed;
  int row = 0;
  int col = 0;

  auto operator<=>(const SceneObject&) const = default;
};

struct SceneGraph {
  std::vector<SceneObject> objects;  // sorted by (row, col), distinct cells
  std::array<float, 3> background{0.0f, 0.0f, 0.0f};

  bool operator==(const SceneGraph&) const = default;
  void canonicalize();
  bool valid() const;
};

nlohmann::json scene_to_json(const SceneGraph& scene);

// Scene whose rendering passes (satisfy) or fails the prompt. Distractors
// are added with probability 0.3.
SceneGraph sample_scene(const PromptSpec& spec, SeededRng& rng, bool satisfy);
// Any valid scene with 0..kMaxObjects objects.
SceneGraph random_scene(SeededRng& rng);

Image render(const SceneGraph& scene);
SceneGraph detect(const Image& image);

// Fill ratio of each glyph mask over its bounding box.
double glyph_fill_ratio(ShapeKind shape);

// ---------------------------------------------------------------- judging

enum class ViolationKind : std::uint8_t { kMissing, kCount, kColor, kPosition };

struct Violation {
  ViolationKind kind = ViolationKind::kMissing;
  ShapeKind shape = ShapeKind::kCircle;
  std::optional<Color> color;  // demanded color, when part of the object phrase
  int expected = 0;            // count
  int found = 0;               // count
  Color actual_color = Color::kRed;
  Relation relation = Relation::kLeftOf;
  ShapeKind other = ShapeKind::kSquare;

  bool operator==(const Violation&) const = default;
};

inline constexpr std::string_view kNullFeedback = "This image is correct.";
inline constexpr std::size_t kMaxViolations = 2;

struct FeedbackRecord {
  std::vector<Violation> violations;
  std::string text;
  bool is_null = true;
};

std::string render_violation(const Violation& v);
FeedbackRecord make_feedback(std::vector<Violation> violations);

// All violations of a scene against a prompt, in priority order
// (missing > count > color > position), uncapped.
std::vector<Violation> scene_violations(const PromptSpec& spec, const SceneGraph& scene);
bool score_scene(const PromptSpec& spec, const SceneGraph& scene);

FeedbackRecord judge_feedback(const PromptSpec& spec, const Image& image);
bool score_prompt(const PromptSpec& spec, const Image& image);

// ---------------------------------------------------------------- tokens

inline constexpr std::size_t kMaxTokens = 32;
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;

struct TokenSeq {
  std::array<int, kMaxTokens> ids{};  // PAD-filled
  std::size_t length = 0;             // non-PAD tokens, BOS and EOS included

  std::vector<int> active() const { return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(length)}; }
  bool operator==(const TokenSeq&) const = default;
};

const std::vector<std::string>& vocabulary();
std::size_t vocabulary_size();
TokenSeq tokenize(std::string_view text);
std::string detokenize(const TokenSeq& tokens);

// ---------------------------------------------------------------- files

void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

}  // namespace rdit
