// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "mobo/datagen/dataset.hpp"
#include "mobo/datagen/detector.hpp"
#include "mobo/datagen/evaluate.hpp"
#include "mobo/datagen/manifest.hpp"
#include "mobo/errors.hpp"
#include "mobo/trainer/ablation.hpp"
#include "mobo/trainer/checkpoint.hpp"
#include "mobo/trainer/pipeline.hpp"

namespace mobo::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

void write_jsonl(const fs::path& p, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file(p, text);
}

void progress_line(const GlobalOptions& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << std::endl;
}

trainer::TrainConfig resolve_config(const GlobalOptions& g, trainer::TrainConfig base) {
  trainer::TrainConfig cfg = g.config_path.empty() ? std::move(base) : trainer::load_config(g.config_path, base);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    trainer::set_option(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

namespace {

void echo_config(const trainer::TrainConfig& cfg) { write_file(fs::path(cfg.out_dir) / "config.txt", trainer::to_text(cfg)); }

/// The checkpoint's model and config; the output directory and sampler seed
/// follow the command line when given.
trainer::RestoredState open_checkpoint(const GlobalOptions& g, const std::string& path) {
  if (path.empty()) throw ConfigError("--ckpt is required");
  auto st = trainer::restore_checkpoint(trainer::load_checkpoint(path));
  st.cfg.out_dir = resolve_config(g).out_dir;
  if (g.seed) st.cfg.sampler.seed = *g.seed;
  return st;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

datagen::Split split_from_string(const std::string& s) {
  if (s == "train") return datagen::Split::train;
  if (s == "eval") return datagen::Split::eval;
  if (s == "any") return datagen::Split::any;
  throw ConfigError("--split expects train, eval or any, got '" + s + "'");
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

std::uint32_t tensor_crc(const Tensor& t) {
  std::vector<unsigned char> bytes;
  bytes.reserve(t.numel() * 8);
  for (double v : t.data()) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(u >> (8 * b)));
  }
  return trainer::crc32_of(bytes.data(), bytes.size());
}

}  // namespace

int cmd_datagen(const GlobalOptions& g, const DatagenOptions& o) {
  const auto cfg = resolve_config(g);
  const fs::path dir = cfg.out_dir;
  datagen::CorpusRequest req{o.count, cfg.seed, split_from_string(o.split), o.min_objects};
  progress_line(g, "datagen: drawing " + std::to_string(o.count) + " records");
  const auto samples = datagen::make_corpus(req);
  const fs::path manifest = datagen::write_dataset(samples, dir);
  echo_config(cfg);

  // Re-read what was written and check every record against the detector.
  const auto records = datagen::load_manifest(manifest);
  std::size_t consistent = 0;
  std::vector<std::string> lines;
  for (const auto& r : records) {
    const auto img = flowsampler::read_ppm(dir / r.image);
    const auto rep = datagen::check_consistency(img, r.prompt, r.question, r.answer);
    if (rep.ok) {
      ++consistent;
    } else {
      json j;
      j["event"] = "inconsistent";
      j["image"] = r.image;
      j["detail"] = rep.detail;
      lines.push_back(j.dump());
    }
  }
  json summary;
  summary["event"] = "datagen";
  summary["records"] = records.size();
  summary["consistent"] = consistent;
  summary["split"] = o.split;
  summary["seed"] = cfg.seed;
  summary["manifest"] = manifest.string();
  lines.push_back(summary.dump());
  write_jsonl(dir / "datagen.jsonl", lines);

  if (!g.quiet) {
    std::cout << "records     " << records.size() << "\n"
              << "consistent  " << consistent << "\n"
              << "manifest    " << manifest.string() << "\n";
  }
  if (consistent != records.size()) {
    std::cerr << "datagen: " << records.size() - consistent << " records failed the consistency check\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  const auto cfg = resolve_config(g);
  trainer::PipelineOptions po;
  po.out_dir = cfg.out_dir;
  if (!o.resume.empty()) po.resume_from = fs::path(o.resume);
  po.checkpoint_every = o.checkpoint_every;
  if (o.max_steps) po.max_steps = *o.max_steps;
  if (!g.quiet) po.progress = [](const std::string& s) { std::cerr << s << std::endl; };
  const auto report = trainer::run_pipeline(cfg, po);

  if (!g.quiet) {
    std::ostringstream t;
    t << "stage      steps  epochs  first loss  last loss   diff      lang\n";
    for (const auto& s : report.stages) {
      if (s.epochs.empty()) continue;
      const auto& a = s.epochs.front();
      const auto& b = s.epochs.back();
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-9s %6zu  %6zu  %10.4f  %9.4f  %8.4f  %8.4f\n", s.name.c_str(), s.total_steps,
                    s.epochs.size(), a.loss, b.loss, b.diff, b.lang);
      t << buf;
    }
    if (!report.evals.empty()) {
      t << "\nafter      geneval  understanding\n";
      for (const auto& e : report.evals) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-9s  %7.3f  %13.3f\n", e.after_stage.c_str(), e.geneval.overall,
                      e.understanding);
        t << buf;
      }
    }
    std::cout << t.str();
  }
  return kOk;
}

int cmd_generate(const GlobalOptions& g, const GenerateOptions& o) {
  if (o.prompt.empty()) throw ConfigError("--prompt is required");
  auto st = open_checkpoint(g, o.ckpt);
  flowsampler::SamplerConfig sc = st.cfg.sampler;
  sc.steps = o.steps;
  sc.schedule.clear();
  sc.validate();

  const auto tokens = datagen::prompt_tokens(o.prompt);
  std::size_t unknown = 0;
  for (std::size_t id : tokens) unknown += id == datagen::Vocabulary::kUnk;
  if (unknown) progress_line(g, "generate: " + std::to_string(unknown) + " prompt word(s) are outside the vocabulary");

  flowsampler::GenerateTiming timing;
  flowsampler::SampleTrace trace;
  const auto img = flowsampler::generate(tokens, *st.model, sc, &timing, &trace);

  const fs::path out = o.output.empty() ? fs::path(st.cfg.out_dir) / "generated.ppm" : fs::path(o.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  flowsampler::write_ppm(out, img);
  echo_config(st.cfg);

  double dit_total = 0;
  for (double v : timing.dit_step_ms) dit_total += v;
  json j;
  j["prompt"] = o.prompt;
  j["seed"] = sc.seed;
  j["steps"] = sc.steps;
  j["velocity_evaluations"] = trace.evaluations;
  j["checkpoint"] = o.ckpt;
  j["image"] = out.filename().string();
  j["timing"]["vlm_ms"] = timing.vlm_ms;
  j["timing"]["mcp_ms"] = timing.mcp_ms;
  j["timing"]["dit_step_ms"] = timing.dit_step_ms;
  j["timing"]["dit_ms"] = dit_total;
  j["timing"]["decode_ms"] = timing.decode_ms;
  j["timing"]["total_ms"] = timing.total_ms;
  fs::path side = out;
  side.replace_extension(".json");
  write_file(side, j.dump(2) + "\n");

  std::cout << out.string() << "\n";
  return kOk;
}

int cmd_answer(const GlobalOptions& g, const AnswerOptions& o) {
  if (o.question.empty()) throw ConfigError("--question is required");
  if (o.image.empty()) throw ConfigError("--image is required");
  const auto img = flowsampler::read_ppm(o.image);
  auto st = open_checkpoint(g, o.ckpt);
  const auto& cc = st.model->cfg.codec;
  if (img.height != cc.height || img.width != cc.width || img.channels != cc.channels) {
    throw FormatError(o.image + ": image is " + std::to_string(img.width) + "x" + std::to_string(img.height) + "x" +
                      std::to_string(img.channels) + ", the model expects " + std::to_string(cc.width) + "x" +
                      std::to_string(cc.height) + "x" + std::to_string(cc.channels));
  }
  const std::string answer = datagen::answer_question(*st.model, img, o.question);
  echo_config(st.cfg);
  std::cout << answer << "\n";
  return kOk;
}

int cmd_eval(const GlobalOptions& g, const EvalOptions& o) {
  auto st = open_checkpoint(g, o.ckpt);
  if (o.prompts) st.cfg.eval.prompts_per_category = *o.prompts;
  if (o.qa) st.cfg.eval.qa_records = *o.qa;
  progress_line(g, "eval: " + std::to_string(st.cfg.eval.prompts_per_category) + " prompts per category, " +
                       std::to_string(st.cfg.eval.qa_records) + " questions");
  const auto res = trainer::evaluate_model(st.cfg, *st.model, "eval");
  echo_config(st.cfg);

  std::vector<std::string> lines;
  for (std::size_t c = 0; c < datagen::kGenevalCategories.size(); ++c) {
    json j;
    j["metric"] = "geneval";
    j["category"] = datagen::to_string(datagen::kGenevalCategories[c]);
    j["score"] = res.geneval.scores[c];
    lines.push_back(j.dump());
  }
  json overall;
  overall["metric"] = "geneval";
  overall["category"] = "overall";
  overall["score"] = res.geneval.overall;
  lines.push_back(overall.dump());
  json und;
  und["metric"] = "understanding";
  und["records"] = st.cfg.eval.qa_records;
  und["score"] = res.understanding;
  lines.push_back(und.dump());
  write_jsonl(fs::path(st.cfg.out_dir) / "metrics.jsonl", lines);

  if (!g.quiet) {
    std::ostringstream t;
    t << "metric          score\n";
    for (std::size_t c = 0; c < datagen::kGenevalCategories.size(); ++c) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%-14s %6.3f\n", datagen::to_string(datagen::kGenevalCategories[c]).c_str(),
                    res.geneval.scores[c]);
      t << buf;
    }
    t << "geneval        " << fmt("%6.3f", res.geneval.overall) << "\n";
    t << "understanding  " << fmt("%6.3f", res.understanding) << "\n";
    std::cout << t.str();
  }
  return kOk;
}

int cmd_ablate(const GlobalOptions& g, const AblateOptions& o) {
  const auto base = resolve_config(g, trainer::ablation_base());
  trainer::AblationOptions ao;
  ao.seeds = o.seeds;
  if (!g.quiet) ao.progress = [](const std::string& s) { std::cerr << s << std::endl; };
  const auto& variants = o.variants.empty() ? trainer::ablation_variants() : o.variants;
  for (const auto& v : variants) trainer::variant_config(base, v);  // reject unknown names before training
  const auto rows = trainer::ablation_run(variants, base, ao);
  echo_config(base);

  std::vector<std::string> lines;
  for (const auto& r : rows) {
    json j;
    j["variant"] = r.variant;
    j["params"] = r.params;
    j["per_seed"] = r.per_seed;
    j["mean"] = r.mean;
    j["sd"] = r.sd;
    lines.push_back(j.dump());
  }
  const fs::path dir = base.out_dir;
  write_jsonl(dir / "ablation.jsonl", lines);
  const std::string table = trainer::ablation_table(rows);
  write_file(dir / "ablation.txt", table);
  if (!g.quiet) std::cout << table;
  return kOk;
}

int cmd_inspect(const GlobalOptions& g, const InspectOptions& o) {
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  const auto ck = trainer::load_checkpoint(o.ckpt);
  const auto cfg = resolve_config(g);

  std::vector<std::string> lines;
  json head;
  head["event"] = "checkpoint";
  head["path"] = o.ckpt;
  head["stage"] = ck.stage;
  head["step"] = ck.step;
  head["tensors"] = ck.tensors.size();
  lines.push_back(head.dump());
  std::ostringstream t;
  t << "stage " << ck.stage << ", step " << ck.step << ", " << ck.tensors.size() << " tensors\n";
  std::size_t width = 4;
  for (const auto& [name, _] : ck.tensors) width = std::max(width, name.size());
  t << std::string("name") + std::string(width - 4, ' ') << "  shape         numel     crc32\n";
  for (const auto& [name, tensor] : ck.tensors) {
    const std::string shape = shape_text(tensor.shape());
    const std::uint32_t crc = tensor_crc(tensor);
    json j;
    j["event"] = "tensor";
    j["name"] = name;
    j["shape"] = tensor.shape();
    j["numel"] = tensor.numel();
    char hex[16];
    std::snprintf(hex, sizeof hex, "%08x", crc);
    j["crc32"] = hex;
    lines.push_back(j.dump());
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %-12s %6zu  %s\n", shape.c_str(), tensor.numel(), hex);
    t << name << std::string(width - name.size(), ' ') << buf;
  }
  write_jsonl(fs::path(cfg.out_dir) / "inspect.jsonl", lines);
  write_file(fs::path(cfg.out_dir) / "config.txt", ck.config);
  if (!g.quiet) std::cout << t.str();
  return kOk;
}

}  // namespace mobo::cli
