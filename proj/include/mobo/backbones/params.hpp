// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mobo/numerics/tensor.hpp"

namespace mobo::backbones {

/// Freeze/train granularity of the model set.
enum class Component { vision_embed, vlm_blocks, lm_head, mcp, dit, codec };

inline constexpr std::array<Component, 6> kAllComponents{Component::vision_embed, Component::vlm_blocks,
                                                         Component::lm_head,      Component::mcp,
                                                         Component::dit,          Component::codec};

std::string_view to_string(Component c);
/// Accepts the hyphenated names ("vision-embed", "vlm-blocks", ...) and
/// "llm" as an alias for vlm-blocks. Unknown names throw ConfigError.
Component component_from_string(std::string_view name);

struct ParamEntry {
  std::string name;
  Component component;
  Tensor tensor;
  // Base weight of a LoRA-wrapped layer: never trained.
  bool lora_base = false;
};

using TrainableMask = std::map<Component, bool>;

/// Parses {"dit", "mcp"} style lists; anything not listed is frozen.
TrainableMask mask_from_names(const std::vector<std::string>& names);
std::vector<std::string> mask_names(const TrainableMask& mask);

}  // namespace mobo::backbones
