// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <vector>

#include "mobo/backbones/dense.hpp"
#include "mobo/backbones/params.hpp"
#include "mobo/mcp/mcp.hpp"

namespace mobo::backbones {

struct VlmConfig {
  std::size_t vocab = 64;
  std::size_t d = 64;
  std::size_t layers = 6;
  std::size_t mlp_ratio = 2;
  std::size_t max_len = 64;    // image tokens + text tokens
  std::size_t image_dim = 48;  // width of one latent image token
  void validate() const;
};

/// Pre-LN block: causal single-head attention, then a GELU MLP.
struct VlmBlock {
  Tensor ln1_g, ln1_b;
  Dense q, k, v, o;
  Tensor ln2_g, ln2_b;
  Dense fc1, fc2;
};

struct ToyVlm {
  VlmConfig cfg;
  Tensor tok_embed;  // [vocab x d]
  Tensor pos_embed;  // [max_len x d]
  Dense vision_embed;
  std::vector<VlmBlock> blocks;
  Tensor lnf_g, lnf_b;
  Dense lm_head;

  static ToyVlm init(const VlmConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<ParamEntry>& out) const;
};

/// One sequence: optional latent image tokens [n x image_dim] placed before
/// the text tokens.
struct VlmSequence {
  Tensor image;
  std::vector<std::size_t> tokens;
  std::size_t length() const { return (image.defined() ? image.rows() : 0) + tokens.size(); }
};

struct VlmOutput {
  mcp::HiddenStack stack;
  /// Next-token logits for the text positions only, stacked over sequences
  /// in order; row text_offsets[s] + t belongs to token t of sequence s.
  Tensor logits;
  std::vector<std::size_t> text_offsets;
};

VlmOutput vlm_forward(Tape& tape, const ToyVlm& vlm, std::span<const VlmSequence> batch, bool want_logits = true);

/// Greedy continuation of `prefix` until `stop` or `max_new` tokens.
/// Returns only the generated tokens (without the stop token).
std::vector<std::size_t> greedy_decode(const ToyVlm& vlm, const Tensor& image, std::vector<std::size_t> prefix,
                                       std::size_t stop, std::size_t max_new);

}  // namespace mobo::backbones
