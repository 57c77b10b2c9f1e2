// SPDX-License-Identifier: Apache-2.0
#include "mobo/datagen/scene.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "mobo/errors.hpp"

namespace mobo::datagen {

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

std::string to_string(Color c) {
  switch (c) {
    case Color::red: return "red";
    case Color::green: return "green";
    case Color::blue: return "blue";
    case Color::yellow: return "yellow";
  }
  return "?";
}

std::optional<ShapeKind> shape_from_string(const std::string& s) {
  for (ShapeKind k : kShapes)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<Color> color_from_string(const std::string& s) {
  for (Color c : kColors)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::array<double, 3> rgb(Color c) {
  switch (c) {
    case Color::red: return {1, 0, 0};
    case Color::green: return {0, 1, 0};
    case Color::blue: return {0, 0, 1};
    case Color::yellow: return {1, 1, 0};
  }
  return {0, 0, 0};
}

void SceneSpec::validate() const {
  if (objects.empty() || objects.size() > 3) {
    throw ContractError("scene must hold 1 to 3 objects, has " + std::to_string(objects.size()));
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].cell >= kGrid * kGrid) throw ContractError("scene cell out of range");
    if (i > 0 && objects[i].cell <= objects[i - 1].cell) {
      throw ContractError("scene cells must be distinct and sorted");
    }
  }
}

SceneSpec gen_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Modulo draws keep scenes identical across standard library builds.
  const std::size_t n = 1 + rng() % 3;
  std::array<std::size_t, kGrid * kGrid> cells{};
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(cells[i], cells[i + rng() % (cells.size() - i)]);
  SceneSpec s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto shape = kShapes[rng() % kShapes.size()];
    const auto color = kColors[rng() % kColors.size()];
    s.objects.push_back({shape, color, cells[i]});
  }
  std::sort(s.objects.begin(), s.objects.end(), [](const auto& a, const auto& b) { return a.cell < b.cell; });
  return s;
}

const std::array<bool, kCell * kCell>& shape_mask(ShapeKind s) {
  static const std::array<bool, 16> square{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  static const std::array<bool, 16> circle{0, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 0};
  static const std::array<bool, 16> triangle{1, 0, 0, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1};
  switch (s) {
    case ShapeKind::circle: return circle;
    case ShapeKind::square: return square;
    case ShapeKind::triangle: return triangle;
  }
  return square;
}

backbones::Image render(const SceneSpec& spec) {
  spec.validate();
  auto img = backbones::Image::blank(kImageSide, kImageSide, 3);
  for (const auto& o : spec.objects) {
    const auto& mask = shape_mask(o.shape);
    const auto c = rgb(o.color);
    for (std::size_t dy = 0; dy < kCell; ++dy)
      for (std::size_t dx = 0; dx < kCell; ++dx) {
        if (!mask[dy * kCell + dx]) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) img.at(o.row() * kCell + dy, o.col() * kCell + dx, ch) = c[ch];
      }
  }
  return img;
}

std::string encode_meta(const SceneSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (i) out += ';';
    const auto& o = spec.objects[i];
    out += to_string(o.color) + ":" + to_string(o.shape) + ":" + std::to_string(o.cell);
  }
  return out;
}

SceneSpec decode_meta(const std::string& meta) {
  SceneSpec s;
  std::stringstream ss(meta);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw FormatError("bad scene meta entry '" + item + "'");
    auto color = color_from_string(item.substr(0, a));
    auto shape = shape_from_string(item.substr(a + 1, b - a - 1));
    const std::string cell = item.substr(b + 1);
    if (!color || !shape || cell.empty() || cell.size() > 2 ||
        !std::all_of(cell.begin(), cell.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      throw FormatError("bad scene meta entry '" + item + "'");
    }
    s.objects.push_back({*shape, *color, static_cast<std::size_t>(std::stoul(cell))});
  }
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("bad scene meta: ") + e.what());
  }
  return s;
}

}  // namespace mobo::datagen
