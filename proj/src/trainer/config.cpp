// SPDX-License-Identifier: Apache-2.0
#include "mobo/trainer/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mobo/errors.hpp"

namespace mobo::trainer {

std::string to_string(LossMode m) { return m == LossMode::diff_only ? "diff-only" : "unified"; }

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "diff-only") return LossMode::diff_only;
  if (s == "unified") return LossMode::unified;
  throw ConfigError("unknown loss mode '" + s + "' (expected diff-only or unified)");
}

void StageSpec::validate() const {
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("stage '" + name + "': " + what);
  };
  need(!name.empty(), "empty name");
  need(!dataset.empty(), "empty dataset");
  need(samples >= 1, "samples must be >= 1");
  need(min_objects >= 1 && min_objects <= 3, "min_objects must be in [1, 3]");
  need(epochs >= 1 && batch >= 1, "epochs and batch must be >= 1");
  need(lr0 > 0 && lr_min >= 0 && lr_min <= lr0, "need lr0 >= lr_min >= 0 and lr0 > 0");
  need(warmup_ratio >= 0 && warmup_ratio < 1, "warmup must be in [0, 1)");
  need(!lora || (lora_rank >= 1 && lora_alpha > 0 && !lora_targets.empty()), "bad lora settings");
  backbones::mask_from_names(mask);
}

void TrainConfig::sync_widths() {
  model.mcp.d_vlm = model.vlm.d;
  model.dit.d_cond = model.mcp.d_cond;
  model.dit.latent_dim = model.codec.latent_dim();
  model.dit.tokens = model.codec.tokens();
  model.vlm.image_dim = model.codec.latent_dim();
}

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  sampler.validate();
  if (stages.empty()) throw ConfigError("config: no stages");
  for (const auto& s : stages) s.validate();
  for (std::size_t i = 0; i < stages.size(); ++i)
    for (std::size_t j = i + 1; j < stages.size(); ++j)
      if (stages[i].name == stages[j].name) throw ConfigError("config: duplicate stage '" + stages[i].name + "'");
  if (!(optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1 && optim.eps > 0 &&
        optim.weight_decay >= 0)) {
    throw ConfigError("config: bad optimizer settings");
  }
  if (eval.sampler_steps < 1) throw ConfigError("config: eval.sampler_steps must be >= 1");
}

std::vector<StageSpec> default_stages() {
  StageSpec align;
  align.name = "align";
  align.dataset = "pairs";
  align.samples = 20000;
  align.mask = {"dit", "mcp"};
  align.epochs = 3;
  align.batch = 64;
  align.lr0 = 1e-3;
  align.lr_min = 1e-5;
  align.warmup_ratio = 0.02;

  StageSpec sft;
  sft.name = "sft";
  sft.dataset = "harder";
  sft.samples = 2000;
  sft.min_objects = 2;
  sft.mask = {"dit", "mcp"};
  sft.epochs = 20;
  sft.batch = 32;
  sft.lr0 = 1e-3;
  sft.lr_min = 5e-6;
  sft.warmup_ratio = 0.05;
  sft.evaluate = true;

  StageSpec unified = sft;
  unified.name = "unified";
  unified.mask = {"dit", "mcp", "llm", "lm-head", "vision-embed"};
  unified.lora = true;
  unified.epochs = 7;
  unified.batch = 16;
  unified.lr0 = 5e-4;
  unified.lr_min = 5e-6;
  unified.loss = LossMode::unified;
  return {align, sft, unified};
}

TrainConfig default_config() {
  TrainConfig c;
  c.stages = default_stages();
  c.sync_widths();
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

StageSpec* find_stage(TrainConfig& cfg, const std::string& name) {
  for (auto& s : cfg.stages)
    if (s.name == name) return &s;
  return nullptr;
}

bool set_stage_option(StageSpec& s, const std::string& field, const std::string& key, const std::string& v) {
  if (field == "dataset") s.dataset = v;
  else if (field == "samples") s.samples = parse_uint(key, v);
  else if (field == "min_objects") s.min_objects = parse_uint(key, v);
  else if (field == "mask") s.mask = split_list(v);
  else if (field == "lora") s.lora = parse_bool(key, v);
  else if (field == "lora.rank") s.lora_rank = parse_uint(key, v);
  else if (field == "lora.alpha") s.lora_alpha = parse_double(key, v);
  else if (field == "lora.targets") s.lora_targets = split_list(v);
  else if (field == "epochs") s.epochs = parse_uint(key, v);
  else if (field == "batch") s.batch = parse_uint(key, v);
  else if (field == "lr0") s.lr0 = parse_double(key, v);
  else if (field == "lr_min") s.lr_min = parse_double(key, v);
  else if (field == "warmup") s.warmup_ratio = parse_double(key, v);
  else if (field == "loss") s.loss = loss_mode_from_string(v);
  else if (field == "evaluate") s.evaluate = parse_bool(key, v);
  else return false;
  return true;
}

}  // namespace

void set_option(TrainConfig& c, const std::string& key, const std::string& v) {
  auto& m = c.model;
  auto u = [&] { return static_cast<std::size_t>(parse_uint(key, v)); };
  auto d = [&] { return parse_double(key, v); };
  if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "cache_mb") c.cache_mb = u();
  else if (key == "loss.lambda_lang") c.loss.lambda_lang = d();
  else if (key == "loss.lambda_diff") c.loss.lambda_diff = d();
  else if (key == "loss.w_sigma") c.loss.w_sigma_kind = objectives::sigma_weighting_from_string(v);
  else if (key == "optim.beta1") c.optim.beta1 = d();
  else if (key == "optim.beta2") c.optim.beta2 = d();
  else if (key == "optim.eps") c.optim.eps = d();
  else if (key == "optim.weight_decay") c.optim.weight_decay = d();
  else if (key == "optim.clip_norm") c.optim.clip_norm = d();
  else if (key == "eval.prompts_per_category") c.eval.prompts_per_category = u();
  else if (key == "eval.qa_records") c.eval.qa_records = u();
  else if (key == "eval.sampler_steps") c.eval.sampler_steps = u();
  else if (key == "sampler.steps") c.sampler.steps = u();
  else if (key == "sampler.seed") c.sampler.seed = parse_uint(key, v);
  else if (key == "model.connector") {
    if (v == "mcp") m.connector = backbones::ConnectorKind::mcp;
    else if (v == "mlp") m.connector = backbones::ConnectorKind::mlp;
    else throw ConfigError("'model.connector' expects mcp or mlp, got '" + v + "'");
  } else if (key == "model.vlm.vocab") m.vlm.vocab = u();
  else if (key == "model.vlm.d") m.vlm.d = u();
  else if (key == "model.vlm.layers") m.vlm.layers = u();
  else if (key == "model.vlm.mlp_ratio") m.vlm.mlp_ratio = u();
  else if (key == "model.vlm.max_len") m.vlm.max_len = u();
  else if (key == "model.mcp.d_h") m.mcp.d_h = u();
  else if (key == "model.mcp.d_cond") m.mcp.d_cond = u();
  else if (key == "model.mcp.K") m.mcp.K = u();
  else if (key == "model.mcp.kernel_k") m.mcp.kernel_k = u();
  else if (key == "model.mcp.reduction_r") m.mcp.reduction_r = u();
  else if (key == "model.mcp.tau0") m.mcp.tau0 = d();
  else if (key == "model.mcp.tau_min") m.mcp.tau_min = d();
  else if (key == "model.mcp.refine") m.mcp.refine_enabled = parse_bool(key, v);
  else if (key == "model.mcp.fusion") m.mcp.fusion_mode = mcp::fusion_mode_from_string(v);
  else if (key == "model.dit.width") m.dit.width = u();
  else if (key == "model.dit.blocks") m.dit.blocks = u();
  else if (key == "model.dit.mlp_ratio") m.dit.mlp_ratio = u();
  else if (key == "model.dit.sigma_features") m.dit.sigma_features = u();
  else if (key == "model.dit.sigma_data") m.dit.sigma_data = d();
  else if (key == "model.codec.height") m.codec.height = u();
  else if (key == "model.codec.width") m.codec.width = u();
  else if (key == "model.codec.channels") m.codec.channels = u();
  else if (key == "model.codec.patch") m.codec.patch = u();
  else if (key == "stages") {
    const auto defaults = default_stages();
    std::vector<StageSpec> next;
    for (const auto& name : split_list(v)) {
      if (StageSpec* s = find_stage(c, name)) {
        next.push_back(*s);
        continue;
      }
      StageSpec s;
      for (const auto& dflt : defaults)
        if (dflt.name == name) s = dflt;
      s.name = name;
      if (s.dataset.empty()) s.dataset = name;
      next.push_back(s);
    }
    c.stages = std::move(next);
  } else if (key.rfind("stage.", 0) == 0) {
    const auto dot = key.find('.', 6);
    if (dot == std::string::npos) throw ConfigError("unknown key '" + key + "'");
    StageSpec* s = find_stage(c, key.substr(6, dot - 6));
    if (!s) throw ConfigError("'" + key + "' names a stage that is not in 'stages'");
    if (!set_stage_option(*s, key.substr(dot + 1), key, v)) throw ConfigError("unknown key '" + key + "'");
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
  c.sync_widths();
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream o;
  const auto& m = c.model;
  o << "seed = " << c.seed << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "cache_mb = " << c.cache_mb << "\n";
  o << "loss.lambda_lang = " << fmt(c.loss.lambda_lang) << "\n";
  o << "loss.lambda_diff = " << fmt(c.loss.lambda_diff) << "\n";
  o << "loss.w_sigma = " << objectives::to_string(c.loss.w_sigma_kind) << "\n";
  o << "optim.beta1 = " << fmt(c.optim.beta1) << "\n";
  o << "optim.beta2 = " << fmt(c.optim.beta2) << "\n";
  o << "optim.eps = " << fmt(c.optim.eps) << "\n";
  o << "optim.weight_decay = " << fmt(c.optim.weight_decay) << "\n";
  o << "optim.clip_norm = " << fmt(c.optim.clip_norm) << "\n";
  o << "eval.prompts_per_category = " << c.eval.prompts_per_category << "\n";
  o << "eval.qa_records = " << c.eval.qa_records << "\n";
  o << "eval.sampler_steps = " << c.eval.sampler_steps << "\n";
  o << "sampler.steps = " << c.sampler.steps << "\n";
  o << "sampler.seed = " << c.sampler.seed << "\n";
  o << "model.connector = " << (m.connector == backbones::ConnectorKind::mcp ? "mcp" : "mlp") << "\n";
  o << "model.vlm.vocab = " << m.vlm.vocab << "\n";
  o << "model.vlm.d = " << m.vlm.d << "\n";
  o << "model.vlm.layers = " << m.vlm.layers << "\n";
  o << "model.vlm.mlp_ratio = " << m.vlm.mlp_ratio << "\n";
  o << "model.vlm.max_len = " << m.vlm.max_len << "\n";
  o << "model.mcp.d_h = " << m.mcp.d_h << "\n";
  o << "model.mcp.d_cond = " << m.mcp.d_cond << "\n";
  o << "model.mcp.K = " << m.mcp.K << "\n";
  o << "model.mcp.kernel_k = " << m.mcp.kernel_k << "\n";
  o << "model.mcp.reduction_r = " << m.mcp.reduction_r << "\n";
  o << "model.mcp.tau0 = " << fmt(m.mcp.tau0) << "\n";
  o << "model.mcp.tau_min = " << fmt(m.mcp.tau_min) << "\n";
  o << "model.mcp.refine = " << (m.mcp.refine_enabled ? "true" : "false") << "\n";
  o << "model.mcp.fusion = " << mcp::to_string(m.mcp.fusion_mode) << "\n";
  o << "model.dit.width = " << m.dit.width << "\n";
  o << "model.dit.blocks = " << m.dit.blocks << "\n";
  o << "model.dit.mlp_ratio = " << m.dit.mlp_ratio << "\n";
  o << "model.dit.sigma_features = " << m.dit.sigma_features << "\n";
  o << "model.dit.sigma_data = " << fmt(m.dit.sigma_data) << "\n";
  o << "model.codec.height = " << m.codec.height << "\n";
  o << "model.codec.width = " << m.codec.width << "\n";
  o << "model.codec.channels = " << m.codec.channels << "\n";
  o << "model.codec.patch = " << m.codec.patch << "\n";
  std::vector<std::string> names;
  for (const auto& s : c.stages) names.push_back(s.name);
  o << "stages = " << join(names) << "\n";
  for (const auto& s : c.stages) {
    const std::string p = "stage." + s.name + ".";
    o << p << "dataset = " << s.dataset << "\n";
    o << p << "samples = " << s.samples << "\n";
    o << p << "min_objects = " << s.min_objects << "\n";
    o << p << "mask = " << join(s.mask) << "\n";
    o << p << "lora = " << (s.lora ? "true" : "false") << "\n";
    o << p << "lora.rank = " << s.lora_rank << "\n";
    o << p << "lora.alpha = " << fmt(s.lora_alpha) << "\n";
    o << p << "lora.targets = " << join(s.lora_targets) << "\n";
    o << p << "epochs = " << s.epochs << "\n";
    o << p << "batch = " << s.batch << "\n";
    o << p << "lr0 = " << fmt(s.lr0) << "\n";
    o << p << "lr_min = " << fmt(s.lr_min) << "\n";
    o << p << "warmup = " << fmt(s.warmup_ratio) << "\n";
    o << p << "loss = " << to_string(s.loss) << "\n";
    o << p << "evaluate = " << (s.evaluate ? "true" : "false") << "\n";
  }
  return o.str();
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    try {
      set_option(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace mobo::trainer
