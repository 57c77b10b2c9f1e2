// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mobo/numerics/ops.hpp"

namespace mobo::mcp {

enum class FusionMode { uniform, learnable };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

struct McpConfig {
  std::size_t d_vlm = 64;
  std::size_t d_h = 32;
  std::size_t d_cond = 48;
  std::size_t K = 4;
  std::size_t kernel_k = 3;
  std::size_t reduction_r = 4;
  double tau0 = 1.0;
  double tau_min = 0.1;
  bool refine_enabled = true;
  FusionMode fusion_mode = FusionMode::learnable;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

struct FusionWeights {
  Tensor w;  // [K]
  double tau = 1.0;
};

/// Per-layer VLM states, each [rows x d_vlm], with the sequence layout.
struct HiddenStack {
  std::vector<Tensor> layers;
  Segments segs;
};

struct ConditioningSequence {
  Tensor E;  // [rows x d_cond]
  Segments segs;
  std::size_t token_count() const { return E.defined() ? E.rows() : 0; }
};

struct RefineParams {
  Tensor depthwise;  // [d_h x k]
  Tensor pw_weight;  // [d_h x d_h]
  Tensor pw_bias;    // [d_h]
  Tensor gate_w1;    // [d_h x d_h/r]
  Tensor gate_b1;
  Tensor gate_w2;  // [d_h/r x d_h]
  Tensor gate_b2;
};

struct McpParams {
  FusionWeights fusion;
  Tensor w_c, ln_c_gain, ln_c_bias;
  RefineParams refine;
  Tensor w_o, ln_o_gain, ln_o_bias;

  /// Learnable tensors only: w is listed for learnable fusion, the refine
  /// block only when enabled.
  NamedTensors named(const McpConfig& cfg) const;
};

McpParams init_params(const McpConfig& cfg, std::mt19937_64& rng);

/// Convex combination of the last K layers with softmax_temperature(w, tau)
/// weights (uniform weights in uniform mode).
Tensor fuse_layers(Tape& tape, const HiddenStack& stack, const FusionWeights& fw, const McpConfig& cfg);

Tensor compress(Tape& tape, const Tensor& h_fuse, const Tensor& w_c, const Tensor& gain, const Tensor& bias);

/// Htil + g * pointwise(depthwise(Htil)) with g a per-sequence channel gate.
Tensor seq_refine(Tape& tape, const Tensor& htil, const RefineParams& p, const Segments& segs);

ConditioningSequence project_out(Tape& tape, const Tensor& htil, const Tensor& w_o, const Tensor& gain,
                                 const Tensor& bias, const Segments& segs);

ConditioningSequence mcp_forward(Tape& tape, const HiddenStack& stack, const McpParams& p, const McpConfig& cfg);

/// Cosine schedule tau0 -> tau_min; steps past the end clamp to tau_min.
double anneal_temperature(long long step, long long total_steps, const McpConfig& cfg);

std::uint64_t param_count(const McpConfig& cfg);
/// The bracketed refine term of param_count.
std::uint64_t refine_param_count(const McpConfig& cfg);

/// Dense multiply-add FLOPs (2 per MAC). Elementwise work, LayerNorm and
/// pooling are not counted.
struct FlopReport {
  std::uint64_t compress = 0;   // per token
  std::uint64_t depthwise = 0;  // per token
  std::uint64_t pointwise = 0;  // per token
  std::uint64_t project = 0;    // per token
  std::uint64_t gate_mlp = 0;   // once per sequence
  std::uint64_t tokens = 0;
  /// Dense per-token cost excluding the gate MLP.
  std::uint64_t per_token_dense() const { return compress + depthwise + pointwise + project; }
  /// Per-token cost with the gate MLP amortized over the sequence.
  double per_token() const;
  std::uint64_t total() const { return tokens * per_token_dense() + gate_mlp; }

  std::uint64_t reference_per_token = 0;
  std::uint64_t reference_total() const { return tokens * reference_per_token; }
};

FlopReport flop_estimate(std::size_t n_tokens, const McpConfig& cfg);

/// Two dense layers d_vlm -> 4 d_vlm -> d_cond with GELU between, applied to
/// the last VLM layer. Comparison baseline for the projector.
struct MlpConnectorParams {
  Tensor w1, b1, w2, b2;
  NamedTensors named() const;
};

MlpConnectorParams init_mlp_connector(const McpConfig& cfg, std::mt19937_64& rng);
ConditioningSequence mlp_connector_forward(Tape& tape, const HiddenStack& stack, const MlpConnectorParams& p);
std::uint64_t mlp_connector_param_count(const McpConfig& cfg);

/// Scaled uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace mobo::mcp
