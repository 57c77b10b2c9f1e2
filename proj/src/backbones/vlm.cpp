// SPDX-License-Identifier: Apache-2.0
#include "mobo/backbones/vlm.hpp"

#include <algorithm>

#include "mobo/errors.hpp"

namespace mobo::backbones {

void VlmConfig::validate() const {
  if (vocab < 2 || d < 2 || layers < 1 || mlp_ratio < 1 || max_len < 1 || image_dim < 1) {
    throw ConfigError("vlm: invalid sizes");
  }
  if (vocab > 256) throw ConfigError("vlm: vocabulary is limited to 256 tokens");
}

namespace {

void push_dense(std::vector<ParamEntry>& out, const std::string& name, Component c, const Dense& d) {
  out.push_back({name + ".w", c, d.w, d.lora != nullptr});
  if (d.b.defined()) out.push_back({name + ".b", c, d.b, d.lora != nullptr});
  if (d.lora) {
    out.push_back({name + ".lora_a", c, d.lora->a, false});
    out.push_back({name + ".lora_b", c, d.lora->b, false});
  }
}

}  // namespace

ToyVlm ToyVlm::init(const VlmConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ToyVlm m;
  m.cfg = cfg;
  m.tok_embed = normal_init({cfg.vocab, cfg.d}, 0.5, rng);
  m.pos_embed = normal_init({cfg.max_len, cfg.d}, 0.1, rng);
  m.vision_embed = Dense::init(cfg.image_dim, cfg.d, true, rng);
  const std::size_t hid = cfg.d * cfg.mlp_ratio;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    VlmBlock b;
    b.ln1_g = Tensor::full({cfg.d}, 1.0);
    b.ln1_b = Tensor::zeros({cfg.d});
    b.q = Dense::init(cfg.d, cfg.d, true, rng);
    b.k = Dense::init(cfg.d, cfg.d, true, rng);
    b.v = Dense::init(cfg.d, cfg.d, true, rng);
    b.o = Dense::init(cfg.d, cfg.d, true, rng);
    b.ln2_g = Tensor::full({cfg.d}, 1.0);
    b.ln2_b = Tensor::zeros({cfg.d});
    b.fc1 = Dense::init(cfg.d, hid, true, rng);
    b.fc2 = Dense::init(hid, cfg.d, true, rng);
    m.blocks.push_back(std::move(b));
  }
  m.lnf_g = Tensor::full({cfg.d}, 1.0);
  m.lnf_b = Tensor::zeros({cfg.d});
  m.lm_head = Dense::init(cfg.d, cfg.vocab, true, rng);
  return m;
}

void ToyVlm::collect(std::vector<ParamEntry>& out) const {
  push_dense(out, "vlm.vision_embed", Component::vision_embed, vision_embed);
  out.push_back({"vlm.tok_embed", Component::vlm_blocks, tok_embed});
  out.push_back({"vlm.pos_embed", Component::vlm_blocks, pos_embed});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const VlmBlock& b = blocks[l];
    const std::string p = "vlm.block" + std::to_string(l);
    out.push_back({p + ".ln1.gain", Component::vlm_blocks, b.ln1_g});
    out.push_back({p + ".ln1.bias", Component::vlm_blocks, b.ln1_b});
    push_dense(out, p + ".q", Component::vlm_blocks, b.q);
    push_dense(out, p + ".k", Component::vlm_blocks, b.k);
    push_dense(out, p + ".v", Component::vlm_blocks, b.v);
    push_dense(out, p + ".o", Component::vlm_blocks, b.o);
    out.push_back({p + ".ln2.gain", Component::vlm_blocks, b.ln2_g});
    out.push_back({p + ".ln2.bias", Component::vlm_blocks, b.ln2_b});
    push_dense(out, p + ".fc1", Component::vlm_blocks, b.fc1);
    push_dense(out, p + ".fc2", Component::vlm_blocks, b.fc2);
  }
  out.push_back({"vlm.lnf.gain", Component::lm_head, lnf_g});
  out.push_back({"vlm.lnf.bias", Component::lm_head, lnf_b});
  push_dense(out, "vlm.lm_head", Component::lm_head, lm_head);
}

VlmOutput vlm_forward(Tape& tape, const ToyVlm& vlm, std::span<const VlmSequence> batch, bool want_logits) {
  if (batch.empty()) throw ContractError("vlm_forward: empty batch");
  const VlmConfig& cfg = vlm.cfg;
  std::vector<std::size_t> lengths, text_ids, pos_ids;
  std::vector<Tensor> images;
  std::size_t image_rows = 0;
  for (const auto& s : batch) {
    if (s.length() == 0) throw ContractError("vlm_forward: empty sequence");
    if (s.length() > cfg.max_len) {
      throw ContractError("vlm_forward: sequence of " + std::to_string(s.length()) + " tokens exceeds max_len " +
                          std::to_string(cfg.max_len));
    }
    if (s.image.defined()) {
      if (s.image.rank() != 2 || s.image.cols() != cfg.image_dim) {
        throw DimensionError("vlm_forward: image tokens " + shape_str(s.image.shape()) + ", expected width " +
                             std::to_string(cfg.image_dim));
      }
      images.push_back(s.image);
      image_rows += s.image.rows();
    }
    for (std::size_t t : s.tokens) {
      if (t >= cfg.vocab) throw IndexError("vlm_forward: token id " + std::to_string(t) + " out of vocabulary");
      text_ids.push_back(t);
    }
    lengths.push_back(s.length());
    for (std::size_t p = 0; p < s.length(); ++p) pos_ids.push_back(p);
  }

  // Embed image and text rows separately, then gather them into sequence
  // order [image_s, text_s] for each sequence s.
  Tensor x;
  Tensor text = text_ids.empty() ? Tensor() : ops::gather_rows(tape, vlm.tok_embed, text_ids);
  if (images.empty()) {
    x = text;
  } else {
    Tensor img = vlm.vision_embed.forward(tape, ops::concat_rows(tape, images));
    std::vector<Tensor> parts{img};
    if (text.defined()) parts.push_back(text);
    Tensor both = ops::concat_rows(tape, parts);
    std::vector<std::size_t> order;
    std::size_t img_at = 0, txt_at = image_rows;
    for (const auto& s : batch) {
      const std::size_t ni = s.image.defined() ? s.image.rows() : 0;
      for (std::size_t i = 0; i < ni; ++i) order.push_back(img_at++);
      for (std::size_t i = 0; i < s.tokens.size(); ++i) order.push_back(txt_at++);
    }
    x = ops::gather_rows(tape, both, order);
  }
  x = ops::add(tape, x, ops::gather_rows(tape, vlm.pos_embed, pos_ids));

  VlmOutput out;
  out.stack.segs = Segments::from_lengths(lengths);
  const Segments& segs = out.stack.segs;
  for (const VlmBlock& b : vlm.blocks) {
    Tensor h = ops::layer_norm(tape, x, b.ln1_g, b.ln1_b);
    Tensor a = ops::attention(tape, b.q.forward(tape, h), b.k.forward(tape, h), b.v.forward(tape, h), segs, segs,
                              true);
    x = ops::add(tape, x, b.o.forward(tape, a));
    h = ops::layer_norm(tape, x, b.ln2_g, b.ln2_b);
    x = ops::add(tape, x, b.fc2.forward(tape, ops::gelu(tape, b.fc1.forward(tape, h))));
    out.stack.layers.push_back(x);
  }

  std::vector<std::size_t> text_rows;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    out.text_offsets.push_back(text_rows.size());
    const std::size_t ni = batch[s].image.defined() ? batch[s].image.rows() : 0;
    for (std::size_t t = 0; t < batch[s].tokens.size(); ++t) text_rows.push_back(segs.offsets[s] + ni + t);
  }
  if (want_logits && !text_rows.empty()) {
    Tensor h = ops::gather_rows(tape, x, text_rows);
    h = ops::layer_norm(tape, h, vlm.lnf_g, vlm.lnf_b);
    out.logits = vlm.lm_head.forward(tape, h);
  }
  return out;
}

std::vector<std::size_t> greedy_decode(const ToyVlm& vlm, const Tensor& image, std::vector<std::size_t> prefix,
                                       std::size_t stop, std::size_t max_new) {
  std::vector<std::size_t> generated;
  VlmSequence seq{image, std::move(prefix)};
  if (seq.tokens.empty()) throw ContractError("greedy_decode: empty prefix");
  for (std::size_t i = 0; i < max_new && seq.length() < vlm.cfg.max_len; ++i) {
    Tape tape(false);
    VlmOutput o = vlm_forward(tape, vlm, std::span<const VlmSequence>(&seq, 1));
    const std::size_t v = vlm.cfg.vocab;
    auto last = o.logits.data().subspan((o.logits.rows() - 1) * v, v);
    const std::size_t next = static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
    if (next == stop) break;
    generated.push_back(next);
    seq.tokens.push_back(next);
  }
  return generated;
}

}  // namespace mobo::backbones
