// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <vector>

#include "mobo/backbones/dense.hpp"
#include "mobo/backbones/params.hpp"
#include "mobo/mcp/mcp.hpp"

namespace mobo::backbones {

struct DitConfig {
  std::size_t tokens = 16;
  std::size_t latent_dim = 48;
  std::size_t width = 48;
  std::size_t blocks = 2;
  std::size_t mlp_ratio = 2;
  std::size_t d_cond = 48;
  std::size_t sigma_features = 32;  // even
  /// Data scale for the linear skip c(sigma) * x_sigma added to the head
  /// output. 0 disables the skip.
  double sigma_data = 0.2;
  void validate() const;
};

/// Pre-LN block: self-attention over latent tokens, cross-attention to the
/// conditioning sequence, GELU MLP.
struct DitBlock {
  Tensor ln1_g, ln1_b;
  Dense q, k, v, o;
  Tensor ln2_g, ln2_b;
  Dense cq, ck, cv, co;
  Tensor ln3_g, ln3_b;
  Dense fc1, fc2;
};

struct ToyDit {
  DitConfig cfg;
  Dense in_proj;
  Tensor pos;  // [tokens x width]
  Dense sigma_proj;
  std::vector<DitBlock> blocks;
  Tensor lnf_g, lnf_b;
  Dense out;

  static ToyDit init(const DitConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<ParamEntry>& dst) const;
};

/// Sinusoidal features of each sigma, [sigmas x features].
Tensor sigma_features(std::span<const double> sigmas, std::size_t features);

/// Coefficient of the best linear predictor of the velocity from x_sigma
/// for zero-mean data of scale sigma_data.
double skip_coefficient(double sigma, double sigma_data);

/// Velocity for a batch of latents stacked as [B*tokens x latent_dim]; one
/// sigma and one conditioning segment per latent.
Tensor dit_velocity(Tape& tape, const ToyDit& dit, const Tensor& x_sigma, std::span<const double> sigmas,
                    const mcp::ConditioningSequence& cond);

}  // namespace mobo::backbones
