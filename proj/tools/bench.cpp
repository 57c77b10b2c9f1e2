// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "mobo/datagen/dataset.hpp"
#include "mobo/errors.hpp"
#include "mobo/trainer/checkpoint.hpp"
#include "mobo/trainer/pipeline.hpp"

namespace mobo::cli {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single run
};

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return s;
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// One warm-up call, then `repeats` timed calls.
template <class F>
std::vector<double> time_repeats(std::size_t repeats, F&& f) {
  f();
  std::vector<double> out;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = Clock::now();
    f();
    out.push_back(ms_since(t0));
  }
  return out;
}

std::string pm(const Stat& s, const char* f) {
  char a[32], b[32];
  std::snprintf(a, sizeof a, f, s.mean);
  std::snprintf(b, sizeof b, f, s.sd);
  return std::string(a) + " ± " + b;
}

// Pads to `width` display columns; "±" is two bytes but one column.
std::string pad(std::string s, std::size_t width) {
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80;
  if (cols < width) s.append(width - cols, ' ');
  return s;
}

}  // namespace

int cmd_bench(const GlobalOptions& g, const BenchOptions& o) {
  if (o.repeats < 1) throw ConfigError("--repeats must be >= 1");
  trainer::TrainConfig cfg;
  std::unique_ptr<backbones::ModelSet> model;
  if (o.ckpt.empty()) {
    cfg = resolve_config(g);
    model = std::make_unique<backbones::ModelSet>(trainer::initial_model(cfg));
  } else {
    auto st = trainer::restore_checkpoint(trainer::load_checkpoint(o.ckpt));
    cfg = st.cfg;
    cfg.out_dir = resolve_config(g).out_dir;
    model = std::move(st.model);
  }
  const auto& m = *model;

  // One held-out record supplies the image, question and caption.
  datagen::CorpusRequest req{1, datagen::mix_seed(cfg.seed, 0xbe7c), datagen::Split::eval, 2};
  const auto sample = datagen::make_corpus(req).front();
  const Tensor latent = m.codec.encode(sample.image);
  const auto question = datagen::question_prefix(sample.qa.question);
  const auto prompt = datagen::prompt_tokens(sample.caption);

  progress_line(g, "bench: " + std::to_string(o.repeats) + " repeats per column");
  const auto vision = time_repeats(o.repeats, [&] {
    Tape tape(false);
    std::vector<backbones::VlmSequence> seq{{latent, {}}};
    backbones::vlm_forward(tape, m.vlm, seq, false);
  });

  const auto ttft = time_repeats(o.repeats, [&] {
    Tape tape(false);
    std::vector<backbones::VlmSequence> seq{{latent, question}};
    auto out = backbones::vlm_forward(tape, m.vlm, seq, true);
    const std::size_t v = out.logits.cols(), last = out.logits.rows() - 1;
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j)
      if (out.logits[last * v + j] > out.logits[last * v + best]) best = j;
    (void)best;
  });

  flowsampler::SamplerConfig sc = cfg.sampler;
  std::vector<double> mcp_ms, gen_inner_ms;
  bool warm = false;
  const auto generation = time_repeats(o.repeats, [&] {
    flowsampler::GenerateTiming t;
    flowsampler::generate(prompt, m, sc, &t);
    if (warm) {
      mcp_ms.push_back(t.mcp_ms);
      gen_inner_ms.push_back(t.total_ms);
    }
    warm = true;
  });

  const Stat s_vis = stat_of(vision), s_ttft = stat_of(ttft);
  std::vector<double> gen_s;
  for (double v : generation) gen_s.push_back(v / 1000.0);
  const Stat s_gen = stat_of(gen_s);
  const Stat s_mcp = stat_of(mcp_ms), s_inner = stat_of(gen_inner_ms);
  const double share = s_mcp.mean / s_inner.mean;

  const auto& mc = cfg.model.mcp;
  const auto flops = mcp::flop_estimate(prompt.size(), mc);
  const std::uint64_t mcp_params = mcp::param_count(mc), mlp_params = mcp::mlp_connector_param_count(mc);

  std::vector<std::string> lines;
  auto column = [&](const char* name, const char* unit, const Stat& s) {
    json j;
    j["column"] = name;
    j["unit"] = unit;
    j["mean"] = s.mean;
    j["sd"] = s.sd;
    j["repeats"] = o.repeats;
    lines.push_back(j.dump());
  };
  column("vision_encode", "ms", s_vis);
  column("ttft", "ms", s_ttft);
  column("generation", "s", s_gen);
  json sh;
  sh["event"] = "mcp_share";
  sh["mcp_ms"] = s_mcp.mean;
  sh["generation_ms"] = s_inner.mean;
  sh["fraction"] = share;
  sh["steps"] = sc.steps;
  lines.push_back(sh.dump());
  json conn;
  conn["event"] = "connector";
  conn["tokens"] = prompt.size();
  conn["mcp_params"] = mcp_params;
  conn["mlp_params"] = mlp_params;
  conn["mcp_flops"] = flops.total();
  conn["mlp_flops"] = flops.reference_total();
  lines.push_back(conn.dump());
  write_jsonl(std::filesystem::path(cfg.out_dir) / "bench.jsonl", lines);
  write_file(std::filesystem::path(cfg.out_dir) / "config.txt", trainer::to_text(cfg));

  if (!g.quiet) {
    std::ostringstream t;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-22s %-22s %s\n", "Vision Enc. (ms)", "TTFT (ms)", "Latency (s)");
    t << buf;
    t << pad(pm(s_vis, "%.3f"), 22) << " " << pad(pm(s_ttft, "%.3f"), 22) << " " << pm(s_gen, "%.4f") << "\n";
    t << "(" << o.repeats << " repeats after one warm-up, " << sc.steps << " sampler steps)\n\n";
    std::snprintf(buf, sizeof buf, "%-14s %10s %16s\n", "connector", "params", "FLOPs/prompt");
    t << buf;
    std::snprintf(buf, sizeof buf, "%-14s %10llu %16llu\n", "mcp", static_cast<unsigned long long>(mcp_params),
                  static_cast<unsigned long long>(flops.total()));
    t << buf;
    std::snprintf(buf, sizeof buf, "%-14s %10llu %16llu\n", "mlp reference", static_cast<unsigned long long>(mlp_params),
                  static_cast<unsigned long long>(flops.reference_total()));
    t << buf;
    std::snprintf(buf, sizeof buf, "\nmcp forward %.4f ms of %.3f ms generation (%.3f%%), %zu prompt tokens\n",
                  s_mcp.mean, s_inner.mean, 100.0 * share, prompt.size());
    t << buf;
    std::cout << t.str();
  }
  return kOk;
}

}  // namespace mobo::cli
