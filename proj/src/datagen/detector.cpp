// SPDX-License-Identifier: Apache-2.0
#include "mobo/datagen/detector.hpp"

#include <array>
#include <sstream>
#include <vector>

#include "mobo/errors.hpp"

namespace mobo::datagen {

namespace {

// 0 = black, 1 + index into kColors otherwise.
int quantize(double r, double g, double b) {
  static const std::array<std::array<double, 3>, 5> palette{
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}}};
  int best = 0;
  double best_d = 1e300;
  for (int i = 0; i < 5; ++i) {
    const double d = (r - palette[i][0]) * (r - palette[i][0]) + (g - palette[i][1]) * (g - palette[i][1]) +
                     (b - palette[i][2]) * (b - palette[i][2]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::array<bool, 16> largest_component(const std::array<int, 16>& labels, int color) {
  std::array<bool, 16> seen{}, best{};
  std::size_t best_n = 0;
  for (std::size_t start = 0; start < 16; ++start) {
    if (seen[start] || labels[start] != color) continue;
    std::array<bool, 16> comp{};
    std::vector<std::size_t> stack{start};
    seen[start] = true;
    std::size_t n = 0;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      comp[p] = true;
      ++n;
      const std::size_t y = p / 4, x = p % 4;
      const std::size_t nb[4] = {y > 0 ? p - 4 : 16, y < 3 ? p + 4 : 16, x > 0 ? p - 1 : 16, x < 3 ? p + 1 : 16};
      for (std::size_t q : nb) {
        if (q < 16 && !seen[q] && labels[q] == color) {
          seen[q] = true;
          stack.push_back(q);
        }
      }
    }
    if (n > best_n) {
      best_n = n;
      best = comp;
    }
  }
  return best;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

SceneSpec detect(const backbones::Image& img, const DetectorOptions& opts) {
  if (img.height != kImageSide || img.width != kImageSide || img.channels != 3) {
    throw DimensionError("detect: expected a 16x16 RGB image");
  }
  SceneSpec out;
  for (std::size_t cell = 0; cell < kGrid * kGrid; ++cell) {
    const std::size_t y0 = (cell / kGrid) * kCell, x0 = (cell % kGrid) * kCell;
    std::array<int, 16> labels{};
    std::array<std::size_t, 5> counts{};
    for (std::size_t dy = 0; dy < kCell; ++dy)
      for (std::size_t dx = 0; dx < kCell; ++dx) {
        const int q = quantize(img.at(y0 + dy, x0 + dx, 0), img.at(y0 + dy, x0 + dx, 1), img.at(y0 + dy, x0 + dx, 2));
        labels[dy * kCell + dx] = q;
        ++counts[q];
      }
    int dominant = 0;
    for (int c = 1; c < 5; ++c)
      if (counts[c] > 0 && (dominant == 0 || counts[c] > counts[dominant])) dominant = c;
    if (dominant == 0) continue;
    const auto comp = largest_component(labels, dominant);
    std::size_t size = 0;
    for (bool b : comp) size += b;
    if (size < opts.min_pixels) continue;
    ShapeKind best = ShapeKind::square;
    std::size_t best_d = 17;
    for (ShapeKind s : kShapes) {
      const auto& m = shape_mask(s);
      std::size_t d = 0;
      for (std::size_t i = 0; i < 16; ++i) d += m[i] != comp[i];
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    out.objects.push_back({best, kColors[static_cast<std::size_t>(dominant - 1)], cell});
  }
  return out;
}

std::optional<std::string> answer_from_scene(const SceneSpec& scene, const std::string& question) {
  static const char* counts[] = {"zero", "one", "two", "three"};
  const auto w = words(question);
  auto unique = [&](ShapeKind s) -> const SceneObject* {
    const SceneObject* hit = nullptr;
    for (const auto& o : scene.objects) {
      if (o.shape != s) continue;
      if (hit) return nullptr;
      hit = &o;
    }
    return hit;
  };
  auto count_answer = [&](std::size_t n) -> std::optional<std::string> {
    if (n > 3) return std::nullopt;
    return std::string(counts[n]);
  };
  // how many objects ? | how many <color> objects ?
  if (w.size() >= 4 && w[0] == "how" && w[1] == "many" && w.back() == "?") {
    if (w.size() == 4 && w[2] == "objects") return count_answer(scene.objects.size());
    if (w.size() == 5 && w[3] == "objects") {
      auto c = color_from_string(w[2]);
      if (!c) return std::nullopt;
      std::size_t n = 0;
      for (const auto& o : scene.objects) n += o.color == *c;
      return count_answer(n);
    }
    return std::nullopt;
  }
  // what color is the <shape> ?
  if (w.size() == 6 && w[0] == "what" && w[1] == "color" && w[2] == "is" && w[3] == "the" && w[5] == "?") {
    auto s = shape_from_string(w[4]);
    if (!s) return std::nullopt;
    const SceneObject* o = unique(*s);
    if (!o) return std::nullopt;
    return to_string(o->color);
  }
  // is there a <color> <shape> ?
  if (w.size() == 6 && w[0] == "is" && w[1] == "there" && w[2] == "a" && w[5] == "?") {
    auto c = color_from_string(w[3]);
    auto s = shape_from_string(w[4]);
    if (!c || !s) return std::nullopt;
    for (const auto& o : scene.objects)
      if (o.color == *c && o.shape == *s) return std::string("yes");
    return std::string("no");
  }
  // is the <shape> (above|below|left of|right of) the <shape> ?
  if (w.size() >= 7 && w[0] == "is" && w[1] == "the" && w.back() == "?") {
    auto a = shape_from_string(w[2]);
    std::size_t i = 3;
    std::string rel = w[i++];
    if (rel == "left" || rel == "right") {
      if (w[i++] != "of") return std::nullopt;
    }
    if (i + 3 != w.size() || w[i] != "the") return std::nullopt;
    auto b = shape_from_string(w[i + 1]);
    if (!a || !b || *a == *b) return std::nullopt;
    const SceneObject* oa = unique(*a);
    const SceneObject* ob = unique(*b);
    if (!oa || !ob) return std::nullopt;
    bool yes;
    if (rel == "above") yes = oa->row() < ob->row();
    else if (rel == "below") yes = oa->row() > ob->row();
    else if (rel == "left") yes = oa->col() < ob->col();
    else if (rel == "right") yes = oa->col() > ob->col();
    else return std::nullopt;
    return std::string(yes ? "yes" : "no");
  }
  return std::nullopt;
}

ConsistencyReport check_consistency(const backbones::Image& img, const std::string& caption,
                                    const std::string& question, const std::string& answer) {
  ConsistencyReport rep;
  const SceneSpec seen = detect(img);
  // Caption: "a <color> <shape> at rXcY" joined by "and", in cell order.
  const auto w = words(caption);
  SceneSpec described;
  std::size_t i = 0;
  while (i < w.size()) {
    if (i > 0) {
      if (w[i] != "and") {
        rep.detail = "caption: expected 'and' at word " + std::to_string(i);
        return rep;
      }
      ++i;
    }
    if (i + 5 > w.size() || w[i] != "a" || w[i + 3] != "at") {
      rep.detail = "caption: malformed object phrase at word " + std::to_string(i);
      return rep;
    }
    auto c = color_from_string(w[i + 1]);
    auto s = shape_from_string(w[i + 2]);
    const std::string& cw = w[i + 4];
    if (!c || !s || cw.size() != 4 || cw[0] != 'r' || cw[2] != 'c' || cw[1] < '0' || cw[1] > '3' || cw[3] < '0' ||
        cw[3] > '3') {
      rep.detail = "caption: bad object phrase at word " + std::to_string(i);
      return rep;
    }
    described.objects.push_back({*s, *c, static_cast<std::size_t>((cw[1] - '0') * 4 + (cw[3] - '0'))});
    i += 5;
  }
  if (!(described == seen)) {
    rep.detail = "caption disagrees with the image";
    return rep;
  }
  auto expected = answer_from_scene(seen, question);
  if (!expected) {
    rep.detail = "question does not parse or is ill-posed for the image";
    return rep;
  }
  if (*expected != answer) {
    rep.detail = "answer '" + answer + "' but the image says '" + *expected + "'";
    return rep;
  }
  rep.ok = true;
  return rep;
}

}  // namespace mobo::datagen
