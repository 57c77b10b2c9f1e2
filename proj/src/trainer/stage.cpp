// SPDX-License-Identifier: Apache-2.0
#include "mobo/trainer/stage.hpp"

#include <algorithm>
#include <cmath>

#include "mobo/errors.hpp"
#include "mobo/objectives/objectives.hpp"

namespace mobo::trainer {

using backbones::ModelSet;
using datagen::Sample;

mcp::HiddenStack FeatureCache::lookup(const backbones::ToyVlm& vlm, const std::vector<std::string>& captions) {
  std::vector<backbones::VlmSequence> missing;
  std::vector<std::string> missing_keys;
  for (const auto& c : captions) {
    if (map_.count(c) || std::find(missing_keys.begin(), missing_keys.end(), c) != missing_keys.end()) continue;
    missing.push_back({Tensor(), datagen::prompt_tokens(c)});
    missing_keys.push_back(c);
  }
  std::unordered_map<std::string, std::vector<Tensor>> fresh;
  if (!missing.empty()) {
    Tape tape(false);
    auto out = backbones::vlm_forward(tape, vlm, missing, false);
    const std::size_t L = out.stack.layers.size();
    const std::size_t keep = std::min(keep_, L);
    for (std::size_t s = 0; s < missing.size(); ++s) {
      std::vector<Tensor> layers;
      for (std::size_t l = L - keep; l < L; ++l) {
        layers.push_back(
            ops::slice_rows(tape, out.stack.layers[l], out.stack.segs.offsets[s], out.stack.segs.lengths[s]));
      }
      std::size_t sz = 0;
      for (const auto& t : layers) sz += t.numel() * sizeof(double);
      if (bytes_ + sz <= budget_) {
        bytes_ += sz;
        map_[missing_keys[s]] = layers;
      } else {
        fresh[missing_keys[s]] = std::move(layers);
      }
    }
  }
  mcp::HiddenStack stack;
  std::vector<std::vector<Tensor>> per_layer;
  std::vector<std::size_t> lengths;
  Tape tape(false);
  for (const auto& c : captions) {
    auto it = map_.find(c);
    const auto& layers = it != map_.end() ? it->second : fresh.at(c);
    if (per_layer.empty()) per_layer.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) per_layer[l].push_back(layers[l]);
    lengths.push_back(layers.front().rows());
  }
  for (auto& parts : per_layer) stack.layers.push_back(ops::concat_rows(tape, parts));
  stack.segs = Segments::from_lengths(lengths);
  return stack;
}

void FeatureCache::clear() {
  map_.clear();
  bytes_ = 0;
}

std::size_t steps_per_epoch(const StageSpec& spec, std::size_t records) {
  return (records + spec.batch - 1) / spec.batch;
}

QaSequence qa_sequence(const std::string& question, const std::string& answer) {
  const auto& vocab = datagen::Vocabulary::standard();
  QaSequence q;
  q.tokens = datagen::question_prefix(question);
  const std::size_t sep = q.tokens.size() - 1;
  for (std::size_t id : vocab.encode(answer)) q.tokens.push_back(id);
  q.tokens.push_back(datagen::Vocabulary::kEos);
  const std::size_t n = q.tokens.size();
  q.targets.assign(n, 0);
  q.mask.assign(n, 0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    q.targets[t] = q.tokens[t + 1];
    q.mask[t] = t >= sep ? 1 : 0;
  }
  return q;
}

void prepare_stage(const StageSpec& spec, ModelSet& model, std::uint64_t seed, std::size_t stage_index) {
  if (spec.lora) {
    bool wrapped = false;
    for (const auto& b : model.vlm.blocks)
      if (b.q.lora || b.k.lora || b.v.lora || b.o.lora || b.fc1.lora || b.fc2.lora) wrapped = true;
    if (!wrapped) {
      std::mt19937_64 rng(datagen::mix_seed(datagen::mix_seed(seed, stage_index + 1), 0x10fa));
      apply_lora(model, spec.lora_targets, spec.lora_rank, spec.lora_alpha, rng);
    }
  }
  backbones::set_trainable(model, backbones::mask_from_names(spec.mask));
}

BatchGraph batch_loss(Tape& tape, const StageSpec& spec, const TrainConfig& cfg, const ModelSet& model,
                      const std::vector<const Sample*>& batch, std::mt19937_64& rng, FeatureCache* cache) {
  BatchGraph g;
  const auto it = model.mask.find(backbones::Component::vlm_blocks);
  const bool vlm_frozen = it == model.mask.end() || !it->second;
  std::vector<std::string> captions;
  for (const Sample* s : batch) captions.push_back(s->caption);

  mcp::HiddenStack stack;
  if (cache && vlm_frozen) {
    stack = cache->lookup(model.vlm, captions);
  } else {
    std::vector<backbones::VlmSequence> seqs;
    for (const auto& c : captions) seqs.push_back({Tensor(), datagen::prompt_tokens(c)});
    stack = backbones::vlm_forward(tape, model.vlm, seqs, false).stack;
  }
  const auto cond = model.condition(tape, stack);

  std::vector<Tensor> latents;
  for (const Sample* s : batch) latents.push_back(model.codec.encode(s->image));
  Tape scratch(false);
  const Tensor x = ops::concat_rows(scratch, latents);
  const auto fs = objectives::flow_sample(x, batch.size(), rng);
  const Tensor pred = backbones::dit_velocity(tape, model.dit, fs.x_sigma, fs.sigmas, cond);
  g.diff = objectives::flow_matching_loss(tape, pred, fs, cfg.loss);

  if (spec.loss == LossMode::diff_only) {
    g.loss = ops::scale(tape, g.diff, cfg.loss.lambda_diff);
    return g;
  }
  std::vector<backbones::VlmSequence> qa;
  std::vector<std::size_t> targets;
  std::vector<std::uint8_t> mask;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto q = qa_sequence(batch[i]->qa.question, batch[i]->qa.answer);
    qa.push_back({latents[i], q.tokens});
    targets.insert(targets.end(), q.targets.begin(), q.targets.end());
    mask.insert(mask.end(), q.mask.begin(), q.mask.end());
  }
  const auto out = backbones::vlm_forward(tape, model.vlm, qa, true);
  g.lang = objectives::i2t_loss(tape, out.logits, targets, mask);
  g.loss = objectives::unified_loss(tape, g.lang, g.diff, cfg.loss);
  return g;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

NamedTensors as_named(const std::vector<backbones::ParamEntry>& entries) {
  NamedTensors out;
  for (const auto& e : entries) out.push_back({e.name, e.tensor});
  return out;
}

}  // namespace

StageReport run_stage(const StageSpec& spec, const TrainConfig& cfg, ModelSet& model, const std::vector<Sample>& data,
                      StageContext& ctx) {
  spec.validate();
  if (data.empty()) throw ContractError("run_stage '" + spec.name + "': empty dataset");
  prepare_stage(spec, model, ctx.seed, ctx.stage_index);
  AdamWState local;
  AdamWState& optim = ctx.optim ? *ctx.optim : local;

  const std::size_t spe = steps_per_epoch(spec, data.size());
  const std::size_t total = spe * spec.epochs;
  const std::uint64_t stage_seed = datagen::mix_seed(ctx.seed, ctx.stage_index + 1);

  StageReport rep;
  rep.name = spec.name;
  rep.total_steps = total;
  if (ctx.start_step > 0) {
    if (!ctx.prior || ctx.prior->losses.size() < ctx.start_step) {
      throw ContractError("run_stage '" + spec.name + "': resuming needs the logs of the earlier steps");
    }
    rep.losses.assign(ctx.prior->losses.begin(), ctx.prior->losses.begin() + ctx.start_step);
    rep.diff_losses.assign(ctx.prior->diff_losses.begin(), ctx.prior->diff_losses.begin() + ctx.start_step);
    rep.lang_losses.assign(ctx.prior->lang_losses.begin(), ctx.prior->lang_losses.begin() + ctx.start_step);
  }
  rep.tau_start = mcp::anneal_temperature(0, static_cast<long long>(total), cfg.model.mcp);

  const auto params = as_named(model.trainable());
  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  const std::size_t stop = std::min(total, ctx.stop_step);

  for (std::size_t step = ctx.start_step; step < stop; ++step) {
    const std::size_t epoch = step / spe, within = step % spe;
    if (epoch != order_epoch) {
      order = epoch_order(data.size(), datagen::mix_seed(stage_seed, 0xe90c0000 + epoch));
      order_epoch = epoch;
    }
    std::vector<const Sample*> batch;
    for (std::size_t i = within * spec.batch; i < std::min(data.size(), (within + 1) * spec.batch); ++i) {
      batch.push_back(&data[order[i]]);
    }
    const double tau = mcp::anneal_temperature(static_cast<long long>(step), static_cast<long long>(total),
                                               cfg.model.mcp);
    const double lr = cosine_lr(static_cast<long long>(step + 1), static_cast<long long>(total), spec.warmup_ratio,
                                spec.lr0, spec.lr_min);
    model.set_tau(tau);
    for (const auto& p : params) p.tensor.zero_grad();

    std::mt19937_64 rng(datagen::mix_seed(stage_seed, step));
    Tape tape;
    const auto g = batch_loss(tape, spec, cfg, model, batch, rng, ctx.cache);
    const double loss = g.loss[0];
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss in stage '" + spec.name + "' at step " + std::to_string(step) +
                           (ctx.last_checkpoint.empty() ? std::string("; no checkpoint written yet")
                                                        : "; last good checkpoint: " + ctx.last_checkpoint));
    }
    tape.backward(g.loss);
    const double norm = clip_grad_norm(params, cfg.optim.clip_norm);
    if (cfg.optim.clip_norm > 0 && norm > cfg.optim.clip_norm) ++rep.clipped_steps;
    adamw_step(params, optim, lr, cfg.optim);

    rep.losses.push_back(loss);
    rep.diff_losses.push_back(g.diff[0]);
    rep.lang_losses.push_back(g.lang.defined() ? g.lang[0] : 0.0);
    if (ctx.after_step) ctx.after_step(step + 1, rep);
  }
  for (std::size_t epoch = 0; (epoch + 1) * spe <= rep.losses.size(); ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    for (std::size_t s = epoch * spe; s < (epoch + 1) * spe; ++s) {
      e.loss += rep.losses[s];
      e.diff += rep.diff_losses[s];
      e.lang += rep.lang_losses[s];
    }
    e.loss /= static_cast<double>(spe);
    e.diff /= static_cast<double>(spe);
    e.lang /= static_cast<double>(spe);
    const long long last = static_cast<long long>((epoch + 1) * spe - 1);
    e.lr = cosine_lr(last + 1, static_cast<long long>(total), spec.warmup_ratio, spec.lr0, spec.lr_min);
    e.tau = mcp::anneal_temperature(last, static_cast<long long>(total), cfg.model.mcp);
    rep.epochs.push_back(e);
  }
  for (const auto& p : params) p.tensor.zero_grad();
  if (stop == total) model.set_tau(mcp::anneal_temperature(static_cast<long long>(total),
                                                           static_cast<long long>(total), cfg.model.mcp));
  rep.tau_end = model.mcp.fusion.tau;
  return rep;
}

}  // namespace mobo::trainer
