// SPDX-License-Identifier: Apache-2.0
#include "mobo/backbones/params.hpp"

#include "mobo/errors.hpp"

namespace mobo::backbones {

std::string_view to_string(Component c) {
  switch (c) {
    case Component::vision_embed: return "vision-embed";
    case Component::vlm_blocks: return "vlm-blocks";
    case Component::lm_head: return "lm-head";
    case Component::mcp: return "mcp";
    case Component::dit: return "dit";
    case Component::codec: return "codec";
  }
  return "?";
}

Component component_from_string(std::string_view name) {
  for (Component c : kAllComponents)
    if (to_string(c) == name) return c;
  if (name == "llm") return Component::vlm_blocks;
  throw ConfigError("unknown component '" + std::string(name) +
                    "' (expected vision-embed, vlm-blocks, lm-head, mcp, dit or codec)");
}

TrainableMask mask_from_names(const std::vector<std::string>& names) {
  TrainableMask mask;
  for (Component c : kAllComponents) mask[c] = false;
  for (const auto& n : names) mask[component_from_string(n)] = true;
  return mask;
}

std::vector<std::string> mask_names(const TrainableMask& mask) {
  std::vector<std::string> out;
  for (Component c : kAllComponents) {
    auto it = mask.find(c);
    if (it != mask.end() && it->second) out.emplace_back(to_string(c));
  }
  return out;
}

}  // namespace mobo::backbones
