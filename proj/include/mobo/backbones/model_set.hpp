// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mobo/backbones/codec.hpp"
#include "mobo/backbones/dit.hpp"
#include "mobo/backbones/params.hpp"
#include "mobo/backbones/vlm.hpp"
#include "mobo/mcp/mcp.hpp"

namespace mobo::backbones {

enum class ConnectorKind { mcp, mlp };

struct ModelConfig {
  VlmConfig vlm;
  mcp::McpConfig mcp;
  DitConfig dit;
  CodecConfig codec;
  ConnectorKind connector = ConnectorKind::mcp;
  /// Checks cross-module widths (d_vlm, d_cond, latent sizes, L >= K).
  void validate() const;
};

inline const std::vector<std::string> kDefaultLoraTargets{"q", "k", "v", "o", "fc1", "fc2"};

/// Everything trained or frozen together: VLM, connector, DiT and codec.
class ModelSet {
 public:
  static ModelSet create(const ModelConfig& cfg, std::uint64_t seed);

  ModelConfig cfg;
  ToyVlm vlm;
  mcp::McpParams mcp;
  mcp::MlpConnectorParams mlp;
  ToyDit dit;
  Codec codec;
  TrainableMask mask;

  /// Every registered tensor in a stable order. The codec mix matrix is
  /// listed under the codec component.
  std::vector<ParamEntry> parameters() const;
  /// Entries with requires_grad set.
  std::vector<ParamEntry> trainable() const;

  mcp::ConditioningSequence condition(Tape& tape, const mcp::HiddenStack& stack) const;
  void set_tau(double tau) { mcp.fusion.tau = tau; }

 private:
  ModelSet() = default;
};

/// Frozen components stop requiring grad (and their grads are dropped);
/// LoRA base weights stay frozen regardless of the mask.
void set_trainable(ModelSet& model, const TrainableMask& mask);

/// Wraps the named dense layers of every VLM block. Throws ConfigError for
/// unknown targets or layers that are already wrapped.
void apply_lora(ModelSet& model, const std::vector<std::string>& targets, std::size_t rank, double alpha,
                std::mt19937_64& rng);

}  // namespace mobo::backbones
