// SPDX-License-Identifier: Apache-2.0
#include "mobo/trainer/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "mobo/errors.hpp"
#include "mobo/trainer/pipeline.hpp"

namespace mobo::trainer {

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"mlp-connector",       "mcp-K1-uniform", "mcp-K4-uniform",
                                          "mcp-K4-learnable",    "mcp-K4-learnable+CA",
                                          "depth-1",             "depth-2",        "depth-4",
                                          "depth-8"};
  return v;
}

TrainConfig ablation_base() {
  TrainConfig c = default_config();
  c.model.vlm.layers = 8;
  StageSpec s;
  s.name = "ablate";
  s.dataset = "pairs";
  s.samples = 12000;
  s.mask = {"dit", "mcp"};
  s.epochs = 4;
  s.batch = 64;
  s.lr0 = 1e-3;
  s.lr_min = 1e-5;
  s.warmup_ratio = 0.02;
  s.evaluate = true;
  c.stages = {s};
  c.sync_widths();
  return c;
}

TrainConfig variant_config(const TrainConfig& base, const std::string& variant) {
  TrainConfig c = base;
  auto& m = c.model.mcp;
  c.model.connector = backbones::ConnectorKind::mcp;
  if (variant == "mlp-connector") {
    c.model.connector = backbones::ConnectorKind::mlp;
  } else if (variant == "mcp-K1-uniform" || variant == "mcp-K4-uniform") {
    m.K = variant == "mcp-K1-uniform" ? 1 : 4;
    m.fusion_mode = mcp::FusionMode::uniform;
    m.refine_enabled = false;
  } else if (variant == "mcp-K4-learnable") {
    m.K = 4;
    m.fusion_mode = mcp::FusionMode::learnable;
    m.refine_enabled = false;
  } else if (variant == "mcp-K4-learnable+CA") {
    m.K = 4;
    m.fusion_mode = mcp::FusionMode::learnable;
    m.refine_enabled = true;
  } else if (variant == "depth-1" || variant == "depth-2" || variant == "depth-4" || variant == "depth-8") {
    m.K = static_cast<std::size_t>(variant.back() - '0');
    m.fusion_mode = mcp::FusionMode::learnable;
    m.refine_enabled = true;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  c.model.validate();
  return c;
}

std::uint64_t connector_params(const TrainConfig& cfg) {
  return cfg.model.connector == backbones::ConnectorKind::mlp ? mcp::mlp_connector_param_count(cfg.model.mcp)
                                                              : mcp::param_count(cfg.model.mcp);
}

std::vector<AblationRow> ablation_run(const std::vector<std::string>& variants, const TrainConfig& base,
                                      const AblationOptions& opts) {
  std::vector<TrainConfig> configs;
  for (const auto& v : variants) configs.push_back(variant_config(base, v));
  if (base.stages.size() != 1) throw ConfigError("ablation: the base config must have exactly one stage");
  const StageSpec& spec = base.stages.front();

  std::vector<AblationRow> rows(variants.size());
  for (std::size_t i = 0; i < variants.size(); ++i) {
    rows[i].variant = variants[i];
    rows[i].params = connector_params(configs[i]);
  }
  for (std::uint64_t seed : opts.seeds) {
    // Every variant starts from the same VLM, so one cache serves them all.
    FeatureCache cache(base.model.vlm.layers, base.cache_mb << 20);
    std::vector<datagen::Sample> data;
    std::map<std::string, double> done;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      TrainConfig cfg = configs[i];
      cfg.seed = seed;
      const std::string key = to_text(cfg);
      if (!done.count(key)) {
        if (data.empty()) data = stage_corpus(cfg, spec);
        auto model = initial_model(cfg);
        StageContext ctx;
        ctx.seed = seed;
        ctx.cache = &cache;
        run_stage(spec, cfg, model, data, ctx);
        done[key] = datagen::mini_geneval(model, cfg.eval.prompts_per_category, datagen::mix_seed(seed, 0x6e7a),
                                          cfg.eval.sampler_steps)
                        .overall;
        if (opts.progress) {
          opts.progress("ablation seed " + std::to_string(seed) + " " + variants[i] + ": mini_geneval " +
                        std::to_string(done[key]));
        }
      }
      rows[i].per_seed.push_back(done[key]);
    }
  }
  for (auto& r : rows) {
    const double n = static_cast<double>(r.per_seed.size());
    if (r.per_seed.empty()) continue;
    for (double v : r.per_seed) r.mean += v;
    r.mean /= n;
    if (r.per_seed.size() > 1) {
      double ss = 0;
      for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
      r.sd = std::sqrt(ss / (n - 1));
    }
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %10s %18s  %s\n", "variant", "params", "mini_geneval", "per seed");
  out += buf;
  for (const auto& r : rows) {
    std::string seeds;
    for (double v : r.per_seed) {
      char s[16];
      std::snprintf(s, sizeof s, "%s%.3f", seeds.empty() ? "" : " ", v);
      seeds += s;
    }
    std::snprintf(buf, sizeof buf, "%-22s %10llu %10.3f +- %.3f  %s\n", r.variant.c_str(),
                  static_cast<unsigned long long>(r.params), r.mean, r.sd, seeds.c_str());
    out += buf;
  }
  return out;
}

}  // namespace mobo::trainer
