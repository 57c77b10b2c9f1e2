// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mobo/trainer/config.hpp"

namespace mobo::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
  std::vector<std::string> sets;  // key=value overrides
};

/// default_config(), then the config file, then --seed / --out-dir, then
/// --set overrides.
trainer::TrainConfig resolve_config(const GlobalOptions& g, trainer::TrainConfig base = trainer::default_config());

struct DatagenOptions {
  std::size_t count = 1000;
  std::string split = "train";
  std::size_t min_objects = 1;
};

struct TrainOptions {
  std::string resume;
  std::size_t checkpoint_every = 0;
  std::optional<std::size_t> max_steps;
};

struct GenerateOptions {
  std::string prompt;
  std::string ckpt;
  std::size_t steps = 20;
  std::string output;  // default <out-dir>/generated.ppm
};

struct AnswerOptions {
  std::string image;
  std::string question;
  std::string ckpt;
};

struct EvalOptions {
  std::string ckpt;
  std::optional<std::size_t> prompts;
  std::optional<std::size_t> qa;
};

struct BenchOptions {
  std::string ckpt;  // empty: freshly initialized weights from the config
  std::size_t repeats = 20;
};

struct AblateOptions {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct InspectOptions {
  std::string ckpt;
};

int cmd_datagen(const GlobalOptions& g, const DatagenOptions& o);
int cmd_train(const GlobalOptions& g, const TrainOptions& o);
int cmd_generate(const GlobalOptions& g, const GenerateOptions& o);
int cmd_answer(const GlobalOptions& g, const AnswerOptions& o);
int cmd_eval(const GlobalOptions& g, const EvalOptions& o);
int cmd_bench(const GlobalOptions& g, const BenchOptions& o);
int cmd_ablate(const GlobalOptions& g, const AblateOptions& o);
int cmd_inspect(const GlobalOptions& g, const InspectOptions& o);

// Helpers shared by the command files.
void write_file(const std::filesystem::path& p, const std::string& text);
/// Rewrites `p` with one JSON document per line.
void write_jsonl(const std::filesystem::path& p, const std::vector<std::string>& lines);
void progress_line(const GlobalOptions& g, const std::string& msg);

}  // namespace mobo::cli
