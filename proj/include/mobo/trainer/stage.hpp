// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "mobo/backbones/model_set.hpp"
#include "mobo/datagen/dataset.hpp"
#include "mobo/trainer/config.hpp"
#include "mobo/trainer/optim.hpp"

namespace mobo::trainer {

/// Last-layer VLM states of prompts, computed once while the VLM is frozen.
/// Rows of a sequence do not depend on its batch neighbours, so cached and
/// freshly computed states are bit-identical.
class FeatureCache {
 public:
  FeatureCache(std::size_t keep_layers, std::size_t budget_bytes) : keep_(keep_layers), budget_(budget_bytes) {}

  /// Hidden stack (last `keep_layers` layers) for the prompts in order.
  mcp::HiddenStack lookup(const backbones::ToyVlm& vlm, const std::vector<std::string>& captions);
  void clear();
  std::size_t bytes() const { return bytes_; }
  std::size_t entries() const { return map_.size(); }
  std::size_t keep_layers() const { return keep_; }

 private:
  std::size_t keep_;
  std::size_t budget_;
  std::size_t bytes_ = 0;
  std::unordered_map<std::string, std::vector<Tensor>> map_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0, lang = 0, diff = 0;
  double lr = 0, tau = 0;  // values used by the epoch's last step
};

struct StageReport {
  std::string name;
  std::size_t total_steps = 0;
  // Per step from step 0 of the stage; lang is 0 for diff-only stages.
  std::vector<double> losses, diff_losses, lang_losses;
  std::vector<EpochLog> epochs;
  double tau_start = 0, tau_end = 0;
  std::size_t clipped_steps = 0;
};

struct StageContext {
  std::uint64_t seed = 0;
  std::size_t stage_index = 0;
  FeatureCache* cache = nullptr;   // used only while the VLM is frozen
  std::size_t start_step = 0;      // resume point
  std::size_t stop_step = std::numeric_limits<std::size_t>::max();  // exclusive
  AdamWState* optim = nullptr;
  const StageReport* prior = nullptr;  // per-step logs before start_step
  std::string last_checkpoint;
  /// Called after each completed step with the number of steps done and
  /// the logs so far.
  std::function<void(std::size_t, const StageReport&)> after_step;
};

std::size_t steps_per_epoch(const StageSpec& spec, std::size_t records);

/// Trains `model` on `data` per `spec`: freeze mask first (LoRA wrap for
/// stages that ask for it), then per step forward, backward, global-norm
/// clipping, AdamW with cosine_lr and a per-stage tau anneal. Throws
/// NumericalError naming the step on a non-finite loss.
StageReport run_stage(const StageSpec& spec, const TrainConfig& cfg, backbones::ModelSet& model,
                      const std::vector<datagen::Sample>& data, StageContext& ctx);

/// Mask plus LoRA wrap for the stage; idempotent for already wrapped layers.
void prepare_stage(const StageSpec& spec, backbones::ModelSet& model, std::uint64_t seed, std::size_t stage_index);

/// Builds the training loss graph of one batch on `tape`.
struct BatchGraph {
  Tensor loss;
  Tensor lang;  // undefined for diff-only batches
  Tensor diff;
};
BatchGraph batch_loss(Tape& tape, const StageSpec& spec, const TrainConfig& cfg, const backbones::ModelSet& model,
                      const std::vector<const datagen::Sample*>& batch, std::mt19937_64& rng, FeatureCache* cache);

/// The [bos] question [sep] answer [eos] sequence with next-token targets
/// and a mask selecting the positions that predict the answer and eos.
struct QaSequence {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> targets;
  std::vector<std::uint8_t> mask;
};
QaSequence qa_sequence(const std::string& question, const std::string& answer);

}  // namespace mobo::trainer
