// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "mobo/datagen/scene.hpp"

namespace mobo::datagen {

/// Per-cell blob finder. Each pixel is snapped to the nearest of black and
/// the four palette colors; the cell's dominant palette color is kept, its
/// largest 4-connected component is matched against the shape templates.
/// Cells whose component is smaller than `min_pixels` count as empty.
struct DetectorOptions {
  std::size_t min_pixels = 6;
};

/// Objects found in cell order. May hold more than three objects or none
/// for arbitrary images; never throws for well-sized images.
SceneSpec detect(const backbones::Image& img, const DetectorOptions& opts = {});

/// Answers a question about a detected scene by parsing the question text
/// itself. Returns nullopt if the question does not parse or is ill-posed
/// for the scene (e.g. "the circle" when there are two circles).
std::optional<std::string> answer_from_scene(const SceneSpec& scene, const std::string& question);

struct ConsistencyReport {
  bool ok = false;
  std::string detail;
};

/// Independent check of one record: the image alone must yield a scene in
/// which the question has exactly the given answer, and the caption must
/// describe that scene.
ConsistencyReport check_consistency(const backbones::Image& img, const std::string& caption,
                                    const std::string& question, const std::string& answer);

}  // namespace mobo::datagen
