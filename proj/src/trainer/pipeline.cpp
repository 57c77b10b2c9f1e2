// SPDX-License-Identifier: Apache-2.0
#include "mobo/trainer/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mobo/errors.hpp"

namespace mobo::trainer {

namespace fs = std::filesystem;
using backbones::ModelSet;

backbones::ModelSet initial_model(const TrainConfig& cfg) {
  return ModelSet::create(cfg.model, datagen::mix_seed(cfg.seed, 0x30de1));
}

std::vector<datagen::Sample> stage_corpus(const TrainConfig& cfg, const StageSpec& spec) {
  datagen::CorpusRequest req;
  req.count = spec.samples;
  req.seed = datagen::mix_seed(cfg.seed, datagen::fnv1a(spec.dataset));
  req.split = datagen::Split::train;
  req.min_objects = spec.min_objects;
  return datagen::make_corpus(req);
}

std::vector<datagen::Sample> eval_records(const TrainConfig& cfg) {
  return datagen::make_corpus({cfg.eval.qa_records, datagen::mix_seed(cfg.seed, 0xe7a1), datagen::Split::eval, 1});
}

EvalResult evaluate_model(const TrainConfig& cfg, const ModelSet& model, const std::string& label) {
  EvalResult r;
  r.after_stage = label;
  r.geneval = datagen::mini_geneval(model, cfg.eval.prompts_per_category, datagen::mix_seed(cfg.seed, 0x6e7a),
                                    cfg.eval.sampler_steps);
  r.understanding = datagen::understanding_accuracy(model, eval_records(cfg));
  return r;
}

CheckpointData make_checkpoint(const TrainConfig& cfg, const ModelSet& model, std::size_t stage, std::size_t step,
                               const AdamWState* optim, const StageReport* partial) {
  CheckpointData ck;
  ck.config = to_text(cfg);
  ck.stage = stage;
  ck.step = step;
  std::ostringstream rng;
  rng << std::mt19937_64(datagen::mix_seed(datagen::mix_seed(cfg.seed, stage + 1), step));
  ck.rng_state = rng.str();
  for (const auto& p : model.parameters()) ck.tensors.push_back({p.name, p.tensor.clone()});
  ck.tensors.push_back({"trainer.tau", Tensor::scalar(model.mcp.fusion.tau)});
  if (optim) {
    ck.tensors.push_back({"optim.step", Tensor::scalar(static_cast<double>(optim->step))});
    for (const auto& [name, mom] : optim->moments) {
      ck.tensors.push_back({"optim.m." + name, Tensor::from({mom.m.size()}, mom.m)});
      ck.tensors.push_back({"optim.v." + name, Tensor::from({mom.v.size()}, mom.v)});
    }
  }
  if (partial && !partial->losses.empty()) {
    const std::size_t n = partial->losses.size();
    ck.tensors.push_back({"trainer.losses", Tensor::from({n}, partial->losses)});
    ck.tensors.push_back({"trainer.diff_losses", Tensor::from({n}, partial->diff_losses)});
    ck.tensors.push_back({"trainer.lang_losses", Tensor::from({n}, partial->lang_losses)});
  }
  return ck;
}

RestoredState restore_checkpoint(const CheckpointData& ck) {
  RestoredState st;
  st.cfg = parse_config(ck.config, default_config());
  st.stage = ck.stage;
  st.step = ck.step;
  st.model = std::make_unique<ModelSet>(initial_model(st.cfg));

  std::map<std::string, Tensor> by_name;
  for (const auto& nt : ck.tensors) {
    if (!by_name.emplace(nt.name, nt.tensor).second) throw FormatError("checkpoint: duplicate tensor '" + nt.name + "'");
  }
  // Adapters present: wrap the same layers before copying values in.
  std::vector<std::string> targets;
  std::size_t rank = 0;
  for (const auto& [name, t] : by_name) {
    const std::string suffix = ".lora_a";
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0 &&
        name.rfind("vlm.block0.", 0) == 0) {
      targets.push_back(name.substr(11, name.size() - 11 - suffix.size()));
      rank = t.cols();
    }
  }
  if (!targets.empty()) {
    double alpha = 0;
    for (const auto& s : st.cfg.stages)
      if (s.lora) {
        alpha = s.lora_alpha;
        break;
      }
    if (alpha <= 0) throw FormatError("checkpoint holds LoRA adapters but its config has no LoRA stage");
    std::sort(targets.begin(), targets.end());
    std::mt19937_64 rng(0);
    backbones::apply_lora(*st.model, targets, rank, alpha, rng);
  }
  std::set<std::string> used;
  for (const auto& p : st.model->parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor '" + p.name + "'");
    if (it->second.shape() != p.tensor.shape()) throw FormatError("checkpoint: shape mismatch for '" + p.name + "'");
    Tensor dst = p.tensor;
    std::copy(it->second.data().begin(), it->second.data().end(), dst.mutable_data().begin());
    used.insert(p.name);
  }
  if (auto it = by_name.find("trainer.tau"); it != by_name.end()) st.model->set_tau(it->second[0]);
  if (auto it = by_name.find("optim.step"); it != by_name.end()) st.optim.step = static_cast<std::uint64_t>(it->second[0]);
  for (const auto& [name, t] : by_name) {
    if (used.count(name) || name == "trainer.tau" || name == "optim.step") continue;
    if (name.rfind("optim.m.", 0) == 0) {
      st.optim.moments[name.substr(8)].m.assign(t.data().begin(), t.data().end());
    } else if (name.rfind("optim.v.", 0) == 0) {
      st.optim.moments[name.substr(8)].v.assign(t.data().begin(), t.data().end());
    } else if (name == "trainer.losses") {
      st.partial.losses.assign(t.data().begin(), t.data().end());
    } else if (name == "trainer.diff_losses") {
      st.partial.diff_losses.assign(t.data().begin(), t.data().end());
    } else if (name == "trainer.lang_losses") {
      st.partial.lang_losses.assign(t.data().begin(), t.data().end());
    } else {
      throw FormatError("checkpoint: unexpected tensor '" + name + "'");
    }
  }
  return st;
}

std::vector<std::string> log_lines(const PipelineReport& report) {
  std::vector<std::string> out;
  for (const auto& s : report.stages) {
    for (const auto& e : s.epochs) {
      nlohmann::ordered_json j;
      j["event"] = "epoch";
      j["stage"] = s.name;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      j["diff"] = e.diff;
      j["lang"] = e.lang;
      j["lr"] = e.lr;
      j["tau"] = e.tau;
      out.push_back(j.dump());
    }
  }
  for (const auto& ev : report.evals) {
    nlohmann::ordered_json j;
    j["event"] = "eval";
    j["after"] = ev.after_stage;
    for (std::size_t c = 0; c < datagen::kGenevalCategories.size(); ++c)
      j["geneval"][datagen::to_string(datagen::kGenevalCategories[c])] = ev.geneval.scores[c];
    j["geneval"]["overall"] = ev.geneval.overall;
    j["understanding"] = ev.understanding;
    out.push_back(j.dump());
  }
  return out;
}

namespace {

bool trains_vlm(const StageSpec& s) {
  if (s.lora) return true;
  for (const auto& m : s.mask)
    if (backbones::component_from_string(m) == backbones::Component::vlm_blocks) return true;
  return false;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

}  // namespace

PipelineReport run_pipeline(const TrainConfig& cfg_in, const PipelineOptions& opts,
                            std::unique_ptr<ModelSet>* final_model) {
  TrainConfig cfg = cfg_in;
  std::unique_ptr<ModelSet> model;
  std::size_t first_stage = 0, first_step = 0;
  AdamWState resumed_optim;
  StageReport resumed_partial;
  if (opts.resume_from) {
    auto st = restore_checkpoint(load_checkpoint(*opts.resume_from));
    cfg = st.cfg;
    model = std::move(st.model);
    first_stage = st.stage;
    first_step = st.step;
    resumed_optim = std::move(st.optim);
    resumed_partial = std::move(st.partial);
  } else {
    cfg.validate();
    model = std::make_unique<ModelSet>(initial_model(cfg));
  }
  auto say = [&](const std::string& s) {
    if (opts.progress) opts.progress(s);
  };

  const bool writing = !opts.out_dir.empty();
  fs::path ckpt_dir;
  if (writing) {
    ckpt_dir = opts.out_dir / "ckpt";
    fs::create_directories(ckpt_dir);
    write_text(opts.out_dir / "config.txt", to_text(cfg));
  }

  PipelineReport report;
  std::size_t keep = std::max<std::size_t>(cfg.model.mcp.K, 1);
  FeatureCache cache(keep, cfg.cache_mb << 20);
  std::map<std::string, std::vector<datagen::Sample>> corpora;
  std::string last_ckpt = opts.resume_from ? opts.resume_from->string() : "";
  std::size_t budget = opts.max_steps;

  for (std::size_t si = first_stage; si < cfg.stages.size() && budget > 0; ++si) {
    const StageSpec& spec = cfg.stages[si];
    const std::string key = spec.dataset + "/" + std::to_string(spec.samples) + "/" + std::to_string(spec.min_objects);
    if (!corpora.count(key)) corpora[key] = stage_corpus(cfg, spec);
    const auto& data = corpora[key];
    if (trains_vlm(spec)) cache.clear();

    AdamWState optim;
    StageContext ctx;
    ctx.seed = cfg.seed;
    ctx.stage_index = si;
    ctx.cache = trains_vlm(spec) ? nullptr : &cache;
    ctx.optim = &optim;
    ctx.last_checkpoint = last_ckpt;
    if (si == first_stage && first_step > 0) {
      optim = resumed_optim;
      ctx.start_step = first_step;
      ctx.prior = &resumed_partial;
    }
    const std::size_t total = steps_per_epoch(spec, data.size()) * spec.epochs;
    const std::size_t remaining = total - std::min(total, ctx.start_step);
    if (budget < remaining) ctx.stop_step = ctx.start_step + budget;
    budget -= std::min(budget, remaining);

    if (writing && opts.checkpoint_every > 0) {
      ctx.after_step = [&, si](std::size_t done, const StageReport& partial) {
        if (done % opts.checkpoint_every != 0 || done == total) return;
        const fs::path p = ckpt_dir / "latest.ckpt";
        save_checkpoint(p, make_checkpoint(cfg, *model, si, done, &optim, &partial));
        last_ckpt = p.string();
        ctx.last_checkpoint = last_ckpt;
      };
    }
    say("stage " + spec.name + ": " + std::to_string(data.size()) + " records, " + std::to_string(total) + " steps");
    StageReport rep = run_stage(spec, cfg, *model, data, ctx);
    const bool finished = rep.losses.size() == total;
    if (writing) {
      const fs::path p = finished ? ckpt_dir / ("stage" + std::to_string(si + 1) + "-" + spec.name + ".ckpt")
                                  : ckpt_dir / "latest.ckpt";
      save_checkpoint(p, make_checkpoint(cfg, *model, finished ? si + 1 : si, finished ? 0 : rep.losses.size(),
                                         finished ? nullptr : &optim, finished ? nullptr : &rep));
      last_ckpt = p.string();
    }
    if (!rep.epochs.empty()) {
      const auto& e = rep.epochs.back();
      say("stage " + spec.name + " done: first-epoch loss " + std::to_string(rep.epochs.front().loss) +
          ", last-epoch loss " + std::to_string(e.loss));
    }
    report.stages.push_back(std::move(rep));
    if (finished && spec.evaluate) {
      report.evals.push_back(evaluate_model(cfg, *model, spec.name));
      const auto& ev = report.evals.back();
      say("eval after " + spec.name + ": mini_geneval " + std::to_string(ev.geneval.overall) + ", understanding " +
          std::to_string(ev.understanding));
    }
    if (writing) {
      std::string text;
      for (const auto& l : log_lines(report)) text += l + "\n";
      write_text(opts.out_dir / "train_log.jsonl", text);
    }
  }
  if (final_model) *final_model = std::move(model);
  return report;
}

}  // namespace mobo::trainer
