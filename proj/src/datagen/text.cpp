// SPDX-License-Identifier: Apache-2.0
#include "mobo/datagen/text.hpp"

#include <random>
#include <sstream>

#include "mobo/errors.hpp"

namespace mobo::datagen {

namespace {

const char* count_word(std::size_t n) {
  static const char* words[] = {"zero", "one", "two", "three"};
  return words[n];
}

std::vector<std::string> standard_words() {
  std::vector<std::string> w{"<pad>", "<bos>", "<eos>", "<sep>", "<unk>", "a", "at", "and", "?"};
  for (auto c : kColors) w.push_back(to_string(c));
  for (auto s : kShapes) w.push_back(to_string(s));
  for (std::size_t c = 0; c < kGrid * kGrid; ++c) w.push_back(cell_word(c));
  for (const char* x : {"how", "many", "objects", "what", "color", "is", "the", "there", "above", "below", "left",
                        "right", "of", "zero", "one", "two", "three", "yes", "no"})
    w.emplace_back(x);
  return w;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v(standard_words());
  return v;
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(std::size_t id) const {
  if (id >= words_.size()) throw IndexError("token id " + std::to_string(id) + " out of vocabulary");
  return words_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::string& text) const {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

std::string cell_word(std::size_t cell) {
  return "r" + std::to_string(cell / kGrid) + "c" + std::to_string(cell % kGrid);
}

std::string caption_of(const SceneSpec& spec) {
  spec.validate();
  std::string out;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    if (i) out += " and ";
    out += "a " + to_string(o.color) + " " + to_string(o.shape) + " at " + cell_word(o.cell);
  }
  return out;
}

std::string to_string(QaKind k) {
  switch (k) {
    case QaKind::counting: return "counting";
    case QaKind::color: return "color";
    case QaKind::position: return "position";
    case QaKind::existence: return "existence";
  }
  return "?";
}

QaPair qa_of(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto shape_count = [&](ShapeKind s) {
    std::size_t n = 0;
    for (const auto& o : spec.objects) n += o.shape == s;
    return n;
  };
  auto find_shape = [&](ShapeKind s) -> const SceneObject& {
    for (const auto& o : spec.objects)
      if (o.shape == s) return o;
    throw ContractError("shape not in scene");
  };
  for (;;) {
    const auto kind = static_cast<QaKind>(rng() % 4);
    switch (kind) {
      case QaKind::counting: {
        if (rng() % 2 == 0) {
          return {kind, "how many objects ?", count_word(spec.objects.size())};
        }
        const Color c = kColors[rng() % kColors.size()];
        std::size_t n = 0;
        for (const auto& o : spec.objects) n += o.color == c;
        return {kind, "how many " + to_string(c) + " objects ?", count_word(n)};
      }
      case QaKind::color: {
        const ShapeKind s = kShapes[rng() % kShapes.size()];
        if (shape_count(s) != 1) continue;
        return {kind, "what color is the " + to_string(s) + " ?", to_string(find_shape(s).color)};
      }
      case QaKind::position: {
        const ShapeKind a = kShapes[rng() % kShapes.size()];
        const ShapeKind b = kShapes[rng() % kShapes.size()];
        const std::size_t rel = rng() % 4;
        if (a == b || shape_count(a) != 1 || shape_count(b) != 1) continue;
        const auto& oa = find_shape(a);
        const auto& ob = find_shape(b);
        static const char* words[] = {"above", "below", "left of", "right of"};
        const bool yes = rel == 0   ? oa.row() < ob.row()
                         : rel == 1 ? oa.row() > ob.row()
                         : rel == 2 ? oa.col() < ob.col()
                                    : oa.col() > ob.col();
        return {kind, "is the " + to_string(a) + " " + words[rel] + " the " + to_string(b) + " ?", yes ? "yes" : "no"};
      }
      case QaKind::existence: {
        const Color c = kColors[rng() % kColors.size()];
        const ShapeKind s = kShapes[rng() % kShapes.size()];
        bool found = false;
        for (const auto& o : spec.objects) found = found || (o.color == c && o.shape == s);
        return {kind, "is there a " + to_string(c) + " " + to_string(s) + " ?", found ? "yes" : "no"};
      }
    }
  }
}

const std::vector<std::string>& answer_vocabulary() {
  static const std::vector<std::string> a{"zero", "one", "two", "three", "red", "green", "blue", "yellow", "yes", "no"};
  return a;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_eval_prompt(const std::string& caption) { return fnv1a(caption) % 8 == 0; }

}  // namespace mobo::datagen
