// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mobo/backbones/codec.hpp"

namespace mobo::datagen {

enum class ShapeKind { circle, square, triangle };
enum class Color { red, green, blue, yellow };

inline constexpr std::array<ShapeKind, 3> kShapes{ShapeKind::circle, ShapeKind::square, ShapeKind::triangle};
inline constexpr std::array<Color, 4> kColors{Color::red, Color::green, Color::blue, Color::yellow};

inline constexpr std::size_t kGrid = 4;                  // cells per side
inline constexpr std::size_t kCell = 4;                  // pixels per cell side
inline constexpr std::size_t kImageSide = kGrid * kCell;  // 16

std::string to_string(ShapeKind s);
std::string to_string(Color c);
std::optional<ShapeKind> shape_from_string(const std::string& s);
std::optional<Color> color_from_string(const std::string& s);
std::array<double, 3> rgb(Color c);

struct SceneObject {
  ShapeKind shape;
  Color color;
  std::size_t cell;  // row * 4 + col
  std::size_t row() const { return cell / kGrid; }
  std::size_t col() const { return cell % kGrid; }
  bool operator==(const SceneObject&) const = default;
};

/// 1 to 3 objects in distinct cells, kept sorted by cell.
struct SceneSpec {
  std::vector<SceneObject> objects;
  bool operator==(const SceneSpec&) const = default;

  /// Throws ContractError when the invariants do not hold.
  void validate() const;
};

/// Object count, cells, shapes and colors uniform; deterministic in seed.
SceneSpec gen_scene(std::uint64_t seed);

/// 4x4 occupancy mask of a shape, row-major.
const std::array<bool, kCell * kCell>& shape_mask(ShapeKind s);

/// Pure colors on black; every pixel is exactly 0 or 1.
backbones::Image render(const SceneSpec& spec);

/// "red:circle:5;blue:square:14"
std::string encode_meta(const SceneSpec& spec);
/// Throws FormatError on malformed input.
SceneSpec decode_meta(const std::string& meta);

}  // namespace mobo::datagen
