// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <unordered_map>

#include "rdit/error.hpp"
#include "rdit/world.hpp"

namespace rdit {

namespace {

std::vector<std::string> build_vocabulary() {
  std::vector<std::string> v{"<pad>", "<bos>", "<eos>", ".", ","};
  for (const char* w : {"a", "and", "colored", "left", "right", "of", "above", "below", "two", "three", "four",
                        "There", "is", "no", "in", "the", "image", "should", "be", "but", "only", "exist", "The",
                        "it", "This", "correct"}) {
    v.emplace_back(w);
  }
  for (ShapeKind s : kAllShapes) {
    v.emplace_back(shape_name(s));
    v.emplace_back(shape_plural(s));
  }
  for (Color c : kAllColors) v.emplace_back(color_name(c));
  for (int d = 0; d <= 9; ++d) v.push_back(std::to_string(d));
  return v;
}

const std::unordered_map<std::string, int>& index() {
  static const std::unordered_map<std::string, int> map = [] {
    std::unordered_map<std::string, int> m;
    const auto& v = vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(v[i], static_cast<int>(i));
    return m;
  }();
  return map;
}

bool is_punct(char c) { return c == '.' || c == ','; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> v = build_vocabulary();
  return v;
}

std::size_t vocabulary_size() { return vocabulary().size(); }

TokenSeq tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else if (is_punct(c) || is_digit(c)) {
      // numbers are spelled digit by digit
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
      words.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  if (words.size() + 2 > kMaxTokens) {
    fail(ErrorKind::kData, "text exceeds " + std::to_string(kMaxTokens) + " tokens: '" + std::string(text) + "'");
  }
  TokenSeq seq;
  seq.ids.fill(kPadId);
  seq.ids[0] = kBosId;
  std::size_t n = 1;
  for (const auto& w : words) {
    const auto it = index().find(w);
    if (it == index().end()) fail(ErrorKind::kData, "out-of-vocabulary word '" + w + "'");
    seq.ids[n++] = it->second;
  }
  seq.ids[n++] = kEosId;
  seq.length = n;
  return seq;
}

std::string detokenize(const TokenSeq& tokens) {
  const auto& v = vocabulary();
  std::string out;
  for (std::size_t i = 0; i < tokens.length; ++i) {
    const int id = tokens.ids[i];
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= v.size()) fail(ErrorKind::kData, "token id out of range");
    const std::string& w = v[static_cast<std::size_t>(id)];
    const bool glued = w.size() == 1 && (is_punct(w[0]) || (is_digit(w[0]) && !out.empty() && is_digit(out.back())));
    if (!out.empty() && !glued) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace rdit
