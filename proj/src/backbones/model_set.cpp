// SPDX-License-Identifier: Apache-2.0
#include "mobo/backbones/model_set.hpp"

#include "mobo/errors.hpp"

namespace mobo::backbones {

void ModelConfig::validate() const {
  vlm.validate();
  mcp.validate();
  dit.validate();
  codec.validate();
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  need(mcp.d_vlm == vlm.d, "mcp.d_vlm must equal vlm.d");
  need(mcp.d_cond == dit.d_cond, "mcp.d_cond must equal dit.d_cond");
  need(dit.latent_dim == codec.latent_dim(), "dit.latent_dim must equal the codec latent width");
  need(dit.tokens == codec.tokens(), "dit.tokens must equal the codec token count");
  need(vlm.image_dim == codec.latent_dim(), "vlm.image_dim must equal the codec latent width");
  need(vlm.layers >= mcp.K, "vlm.layers must be >= mcp.K");
}

ModelSet ModelSet::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelSet m;
  m.cfg = cfg;
  std::mt19937_64 rng(seed);
  m.vlm = ToyVlm::init(cfg.vlm, rng);
  m.mcp = mcp::init_params(cfg.mcp, rng);
  if (cfg.connector == ConnectorKind::mlp) m.mlp = mcp::init_mlp_connector(cfg.mcp, rng);
  m.dit = ToyDit::init(cfg.dit, rng);
  m.codec = Codec(cfg.codec);
  for (Component c : kAllComponents) m.mask[c] = false;
  return m;
}

std::vector<ParamEntry> ModelSet::parameters() const {
  std::vector<ParamEntry> out;
  vlm.collect(out);
  NamedTensors conn = cfg.connector == ConnectorKind::mcp ? mcp.named(cfg.mcp) : mlp.named();
  for (auto& nt : conn) out.push_back({"mcp." + nt.name, Component::mcp, nt.tensor});
  dit.collect(out);
  out.push_back({"codec.mix", Component::codec, codec.mix()});
  return out;
}

std::vector<ParamEntry> ModelSet::trainable() const {
  std::vector<ParamEntry> out;
  for (auto& p : parameters())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

mcp::ConditioningSequence ModelSet::condition(Tape& tape, const mcp::HiddenStack& stack) const {
  if (cfg.connector == ConnectorKind::mlp) return mcp::mlp_connector_forward(tape, stack, mlp);
  return mcp::mcp_forward(tape, stack, mcp, cfg.mcp);
}

void set_trainable(ModelSet& model, const TrainableMask& mask) {
  TrainableMask full;
  for (Component c : kAllComponents) full[c] = false;
  for (auto [c, on] : mask) full[c] = on;
  model.mask = full;
  for (auto& p : model.parameters()) {
    const bool on = full[p.component] && !p.lora_base;
    p.tensor.set_requires_grad(on);
    if (!on) p.tensor.drop_grad();
  }
}

void apply_lora(ModelSet& model, const std::vector<std::string>& targets, std::size_t rank, double alpha,
                std::mt19937_64& rng) {
  auto pick = [](VlmBlock& b, const std::string& t) -> Dense& {
    if (t == "q") return b.q;
    if (t == "k") return b.k;
    if (t == "v") return b.v;
    if (t == "o") return b.o;
    if (t == "fc1") return b.fc1;
    if (t == "fc2") return b.fc2;
    throw ConfigError("apply_lora: unknown target '" + t + "' (expected q, k, v, o, fc1 or fc2)");
  };
  for (auto& b : model.vlm.blocks)
    for (const auto& t : targets)
      if (pick(b, t).lora) throw ConfigError("apply_lora: layer '" + t + "' is already wrapped");
  for (auto& b : model.vlm.blocks)
    for (const auto& t : targets) pick(b, t).wrap(rank, alpha, rng);
  set_trainable(model, model.mask);
}

}  // namespace mobo::backbones
