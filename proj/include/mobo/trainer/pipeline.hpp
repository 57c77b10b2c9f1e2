// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mobo/datagen/evaluate.hpp"
#include "mobo/trainer/checkpoint.hpp"
#include "mobo/trainer/stage.hpp"

namespace mobo::trainer {

struct EvalResult {
  std::string after_stage;
  datagen::GenevalReport geneval;
  double understanding = 0.0;
};

struct PipelineReport {
  std::vector<StageReport> stages;
  std::vector<EvalResult> evals;
};

struct PipelineOptions {
  /// Empty: nothing is written. Otherwise config echo, train_log.jsonl and
  /// checkpoints under ckpt/ are written there.
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Mid-stage checkpoint interval in steps (ckpt/latest.ckpt); 0 disables.
  std::size_t checkpoint_every = 0;
  /// Stops after this many steps in total (across stages) of this run.
  std::size_t max_steps = static_cast<std::size_t>(-1);
  /// Human progress lines; may be empty.
  std::function<void(const std::string&)> progress;
};

/// Model weights derived from the config seed.
backbones::ModelSet initial_model(const TrainConfig& cfg);

/// Training records of a stage's corpus (train split), deterministic in
/// (seed, dataset name, samples, min_objects).
std::vector<datagen::Sample> stage_corpus(const TrainConfig& cfg, const StageSpec& spec);
/// Held-out Q/A records used by the understanding evaluator.
std::vector<datagen::Sample> eval_records(const TrainConfig& cfg);

EvalResult evaluate_model(const TrainConfig& cfg, const backbones::ModelSet& model, const std::string& label);

/// Runs the stages in order with a checkpoint after each; evaluates after
/// stages flagged `evaluate`. With resume_from set, the checkpoint's config
/// echo replaces `cfg` and training continues at its stage and step.
PipelineReport run_pipeline(const TrainConfig& cfg, const PipelineOptions& opts = {},
                            std::unique_ptr<backbones::ModelSet>* final_model = nullptr);

/// Model parameters, then optimizer state ("optim.*") and stage logs
/// ("trainer.*").
CheckpointData make_checkpoint(const TrainConfig& cfg, const backbones::ModelSet& model, std::size_t stage,
                               std::size_t step, const AdamWState* optim, const StageReport* partial);

struct RestoredState {
  TrainConfig cfg;
  std::unique_ptr<backbones::ModelSet> model;
  std::size_t stage = 0;
  std::size_t step = 0;
  AdamWState optim;
  StageReport partial;
};

/// Rebuilds the model (re-applying LoRA when the checkpoint holds adapters)
/// and copies every tensor by name. Missing or mis-shaped tensors throw
/// FormatError.
RestoredState restore_checkpoint(const CheckpointData& ck);

/// JSON-lines records of a report: one per epoch and one per evaluation.
std::vector<std::string> log_lines(const PipelineReport& report);

}  // namespace mobo::trainer
