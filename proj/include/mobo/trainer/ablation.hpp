// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mobo/trainer/config.hpp"

namespace mobo::trainer {

/// mlp-connector, mcp-K1-uniform, mcp-K4-uniform, mcp-K4-learnable,
/// mcp-K4-learnable+CA, then depth-1, depth-2, depth-4, depth-8 (learnable
/// fusion with refinement over the last N layers).
const std::vector<std::string>& ablation_variants();

/// Reduced single-stage recipe on an 8-layer VLM shared by every variant.
TrainConfig ablation_base();

/// `base` with the connector settings of `variant`; ConfigError if unknown.
TrainConfig variant_config(const TrainConfig& base, const std::string& variant);

/// Connector parameters of the variant's configuration.
std::uint64_t connector_params(const TrainConfig& cfg);

struct AblationRow {
  std::string variant;
  std::uint64_t params = 0;
  std::vector<double> per_seed;  // mini_geneval overall
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for one seed
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::function<void(const std::string&)> progress;
};

/// Trains every variant with identical seeds, data and steps and scores it
/// with mini_geneval. Identical configurations are trained once.
std::vector<AblationRow> ablation_run(const std::vector<std::string>& variants, const TrainConfig& base,
                                      const AblationOptions& opts = {});

/// Aligned text table: variant, params, mean +- sd, per-seed scores.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace mobo::trainer
