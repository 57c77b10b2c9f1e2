// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mobo/backbones/model_set.hpp"
#include "mobo/flowsampler/sampler.hpp"
#include "mobo/objectives/objectives.hpp"

namespace mobo::trainer {

enum class LossMode { diff_only, unified };
std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

struct StageSpec {
  std::string name;          // align | sft | unified
  std::string dataset;       // corpus name; stages naming the same corpus share its records
  std::size_t samples = 0;   // records in the corpus
  std::size_t min_objects = 1;
  std::vector<std::string> mask;  // trainable components
  bool lora = false;
  std::size_t lora_rank = 16;
  double lora_alpha = 32.0;
  std::vector<std::string> lora_targets = backbones::kDefaultLoraTargets;
  std::size_t epochs = 1;
  std::size_t batch = 16;
  double lr0 = 1e-4;
  double lr_min = 1e-6;
  double warmup_ratio = 0.0;
  LossMode loss = LossMode::diff_only;
  bool evaluate = false;  // run the evaluators after this stage

  void validate() const;
};

struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

struct EvalConfig {
  std::size_t prompts_per_category = 50;
  std::size_t qa_records = 200;
  std::size_t sampler_steps = 20;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::vector<StageSpec> stages;
  objectives::LossWeights loss;
  backbones::ModelConfig model;
  flowsampler::SamplerConfig sampler;
  OptimConfig optim;
  EvalConfig eval;
  std::size_t cache_mb = 512;  // frozen-VLM feature cache budget
  std::string out_dir = "runs/default";

  void validate() const;
  /// Copies the shared widths (d_vlm, d_cond, latent sizes) from the
  /// owning modules into the modules that consume them.
  void sync_widths();
};

/// align / sft / unified with the default budgets.
std::vector<StageSpec> default_stages();
TrainConfig default_config();

/// Flat `dotted.key = value` text, one key per line, every field present.
std::string to_text(const TrainConfig& cfg);

/// Applies `key = value` lines on top of `base`. '#' starts a comment.
/// Unknown keys or bad values throw ConfigError naming the line.
TrainConfig parse_config(const std::string& text, TrainConfig base = default_config());
TrainConfig load_config(const std::string& path, TrainConfig base = default_config());

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void set_option(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace mobo::trainer
