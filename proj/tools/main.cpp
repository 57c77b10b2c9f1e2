// SPDX-License-Identifier: Apache-2.0
// mobo: data generation, training, sampling and evaluation of the toy
// unified model.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file
// format error, 3 non-finite values during training or sampling.
#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "mobo/errors.hpp"

using namespace mobo;
using namespace mobo::cli;

int main(int argc, char** argv) {
  CLI::App app{"Toy unified multimodal model: datagen, train, generate, answer, eval, bench, ablate, inspect"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Config file of `key = value` lines");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for data, initialization and sampling noise");
  app.add_option("--out-dir", g.out_dir, "Output directory (default from the config)");
  app.add_flag("--quiet", g.quiet, "No progress lines or human tables");
  app.add_option("--set", g.sets, "Config override key=value; repeatable")->allow_extra_args(false);

  DatagenOptions dg;
  auto* c_datagen = app.add_subcommand("datagen", "Write a synthetic quadruplet corpus and verify it");
  c_datagen->add_option("--count", dg.count, "Records to write")->capture_default_str();
  c_datagen->add_option("--split", dg.split, "train, eval or any")->capture_default_str();
  c_datagen->add_option("--min-objects", dg.min_objects, "Minimum objects per scene")->capture_default_str();

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Run the staged training pipeline");
  c_train->add_option("--resume", tr.resume, "Checkpoint to resume from");
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Mid-stage checkpoint interval in steps");
  c_train->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps");

  GenerateOptions gen;
  auto* c_gen = app.add_subcommand("generate", "Text-to-image sampling");
  c_gen->add_option("--prompt", gen.prompt, "Caption")->required();
  c_gen->add_option("--ckpt", gen.ckpt, "Checkpoint")->required();
  c_gen->add_option("--steps", gen.steps, "Euler steps")->capture_default_str();
  c_gen->add_option("--output", gen.output, "PPM path (default <out-dir>/generated.ppm)");

  AnswerOptions ans;
  auto* c_ans = app.add_subcommand("answer", "Answer a question about an image");
  c_ans->add_option("--image", ans.image, "PPM image")->required();
  c_ans->add_option("--question", ans.question, "Question")->required();
  c_ans->add_option("--ckpt", ans.ckpt, "Checkpoint")->required();

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Generation and understanding metrics");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_eval->add_option("--prompts", ev.prompts, "Prompts per generation category");
  c_eval->add_option("--qa", ev.qa, "Held-out questions");

  BenchOptions bn;
  auto* c_bench = app.add_subcommand("bench", "Latency table and connector cost summary");
  c_bench->add_option("--ckpt", bn.ckpt, "Checkpoint (default: initialized weights)");
  c_bench->add_option("--repeats", bn.repeats, "Timed repeats per column")->capture_default_str();

  AblateOptions ab;
  auto* c_ablate = app.add_subcommand("ablate", "Connector ablation table");
  c_ablate->add_option("--variants", ab.variants, "Variant names (default: all)")->delimiter(',');
  c_ablate->add_option("--seeds", ab.seeds, "Training seeds")->delimiter(',')->capture_default_str();

  InspectOptions in;
  auto* c_inspect = app.add_subcommand("inspect", "List checkpoint tensors");
  c_inspect->add_option("--ckpt", in.ckpt, "Checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*c_datagen) return cmd_datagen(g, dg);
    if (*c_train) return cmd_train(g, tr);
    if (*c_gen) return cmd_generate(g, gen);
    if (*c_ans) return cmd_answer(g, ans);
    if (*c_eval) return cmd_eval(g, ev);
    if (*c_bench) return cmd_bench(g, bn);
    if (*c_ablate) return cmd_ablate(g, ab);
    if (*c_inspect) return cmd_inspect(g, in);
  } catch (const IoError& e) {
    std::cerr << "mobo: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "mobo: " << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "mobo: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "mobo: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
