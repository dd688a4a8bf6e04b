// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "rdit/error.hpp"
#include "rdit/world.hpp"

namespace rdit {

void SceneGraph::canonicalize() {
  std::sort(objects.begin(), objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
}

bool SceneGraph::valid() const {
  if (objects.size() > static_cast<std::size_t>(kMaxObjects)) return false;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.row < 0 || o.row >= kGrid || o.col < 0 || o.col >= kGrid) return false;
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[j].row == o.row && objects[j].col == o.col) return false;
    }
  }
  return true;
}

nlohmann::json scene_to_json(const SceneGraph& scene) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    arr.push_back({{"shape", shape_name(o.shape)}, {"color", color_name(o.color)}, {"row", o.row}, {"col", o.col}});
  }
  return arr;
}

namespace {

template <class T, std::size_t N>
T pick(const std::array<T, N>& values, SeededRng& rng) {
  return values[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(N) - 1))];
}

// k distinct cells in random order.
std::vector<int> random_cells(SeededRng& rng, std::size_t k) {
  std::vector<int> cells(kGrid * kGrid);
  for (int i = 0; i < kGrid * kGrid; ++i) cells[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cells.size() - i - 1)));
    std::swap(cells[i], cells[j]);
  }
  cells.resize(k);
  return cells;
}

bool cell_free(const SceneGraph& s, int row, int col) {
  return std::none_of(s.objects.begin(), s.objects.end(),
                      [&](const SceneObject& o) { return o.row == row && o.col == col; });
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

struct Need {
  ShapeKind shape;
  Color color;
};

std::vector<Need> required_objects(const PromptSpec& spec, SeededRng& rng) {
  switch (spec.category) {
    case Category::kSingle:
    case Category::kColor: return {{spec.shape_a, *spec.color_a}};
    case Category::kCounting: return std::vector<Need>(static_cast<std::size_t>(spec.count), {spec.shape_a, *spec.color_a});
    case Category::kTwo:
    case Category::kPosition: {
      const Color ca = pick(kAllColors, rng);
      return {{spec.shape_a, ca}, {spec.shape_b, pick(kAllColors, rng)}};
    }
    case Category::kAttribution: return {{spec.shape_a, *spec.color_a}, {spec.shape_b, *spec.color_b}};
  }
  return {};
}

SceneGraph place(const std::vector<Need>& needs, const PromptSpec& spec, SeededRng& rng) {
  SceneGraph s;
  for (int attempt = 0;; ++attempt) {
    s.objects.clear();
    const auto cells = random_cells(rng, needs.size());
    for (std::size_t i = 0; i < needs.size(); ++i) {
      s.objects.push_back({needs[i].shape, needs[i].color, cells[i] / kGrid, cells[i] % kGrid});
    }
    if (spec.category != Category::kPosition || relation_holds(spec.relation, s.objects[0], s.objects[1])) break;
    if (attempt > 1000) fail(ErrorKind::kData, "cannot place objects for " + spec.text);
  }
  return s;
}

SceneObject random_object_in_free_cell(const SceneGraph& s, SeededRng& rng) {
  for (;;) {
    const int cell = rng.uniform_int(0, kGrid * kGrid - 1);
    if (cell_free(s, cell / kGrid, cell % kGrid)) {
      const ShapeKind shape = pick(kAllShapes, rng);
      return {shape, pick(kAllColors, rng), cell / kGrid, cell % kGrid};
    }
  }
}

inline constexpr double kDistractorProbability = 0.3;

// One random corruption of a satisfying scene.
void corrupt(SceneGraph& s, const PromptSpec& spec, SeededRng& rng) {
  const int choice = rng.uniform_int(0, 3);
  const std::size_t victim = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(s.objects.size()) - 1));
  switch (choice) {
    case 0:  // drop an object
      s.objects.erase(s.objects.begin() + static_cast<std::ptrdiff_t>(victim));
      break;
    case 1: {  // recolor
      Color c = s.objects[victim].color;
      while (c == s.objects[victim].color) c = pick(kAllColors, rng);
      s.objects[victim].color = c;
      break;
    }
    case 2: {  // reshape
      ShapeKind k = s.objects[victim].shape;
      while (k == s.objects[victim].shape) k = pick(kAllShapes, rng);
      s.objects[victim].shape = k;
      break;
    }
    default:
      if (spec.category == Category::kPosition) {
        std::swap(s.objects[0].row, s.objects[1].row);
        std::swap(s.objects[0].col, s.objects[1].col);
      } else if (s.objects.size() < static_cast<std::size_t>(kMaxObjects)) {
        SceneObject extra = random_object_in_free_cell(s, rng);
        extra.shape = s.objects[victim].shape;
        extra.color = s.objects[victim].color;
        s.objects.push_back(extra);
      }
      break;
  }
}

}  // namespace

SceneGraph sample_scene(const PromptSpec& spec, SeededRng& rng, bool satisfy) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    SceneGraph s = place(required_objects(spec, rng), spec, rng);
    if (!satisfy) corrupt(s, spec, rng);
    if (rng.bernoulli(kDistractorProbability) && s.objects.size() < static_cast<std::size_t>(kMaxObjects)) {
      for (int tries = 0; tries < 20; ++tries) {
        SceneGraph with = s;
        with.objects.push_back(random_object_in_free_cell(s, rng));
        if (score_scene(spec, with) == satisfy) {
          s = std::move(with);
          break;
        }
      }
    }
    s.canonicalize();
    if (s.valid() && score_scene(spec, s) == satisfy) return s;
  }
  fail(ErrorKind::kData, "infeasible scene request for '" + spec.text + "'");
}

SceneGraph random_scene(SeededRng& rng) {
  SceneGraph s;
  const int n = rng.uniform_int(0, kMaxObjects);
  for (int cell : random_cells(rng, static_cast<std::size_t>(n))) {
    const ShapeKind shape = pick(kAllShapes, rng);
    s.objects.push_back({shape, pick(kAllColors, rng), cell / kGrid, cell % kGrid});
  }
  s.canonicalize();
  return s;
}

}  // namespace rdit
