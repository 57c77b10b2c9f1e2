// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mobo/numerics/ops.hpp"

namespace mobo::objectives {

enum class SigmaWeighting {
  constant,           // w = 1
  inverse_quadratic,  // w = 1 / (sigma^2 + 0.01)
};

std::string to_string(SigmaWeighting w);
SigmaWeighting sigma_weighting_from_string(const std::string& s);

struct LossWeights {
  double lambda_lang = 1.0;
  double lambda_diff = 1.0;
  SigmaWeighting w_sigma_kind = SigmaWeighting::constant;

  void validate() const;
  double w(double sigma) const;
};

struct SigmaDist {
  double lo = 0.001;
  double hi = 0.999;
};

/// A batch of interpolated latents. Sample b owns rows
/// [b * rows_per_sample, (b + 1) * rows_per_sample) and noise level sigmas[b].
struct FlowSample {
  Tensor x;
  Tensor eps;
  std::vector<double> sigmas;
  std::size_t rows_per_sample = 0;
  Tensor x_sigma;  // (1 - sigma) x + sigma eps
  Tensor v_star;   // eps - x

  std::size_t samples() const { return sigmas.size(); }
};

/// Builds the sample from explicit noise and noise levels.
FlowSample make_flow_sample(const Tensor& x, const Tensor& eps, std::vector<double> sigmas);

/// Draws standard-normal noise and one sigma per sample from `rng`. `x`
/// holds `samples` latents stacked along rows.
FlowSample flow_sample(const Tensor& x, std::size_t samples, std::mt19937_64& rng, SigmaDist dist = {});

/// Mean over samples of w(sigma_b) * mean((pred - v_star)^2) for sample b.
Tensor flow_matching_loss(Tape& tape, const Tensor& pred, const FlowSample& fs, const LossWeights& lw);

/// Masked next-token cross-entropy over answer positions.
Tensor i2t_loss(Tape& tape, const Tensor& logits, std::span<const std::size_t> targets,
                std::span<const std::uint8_t> answer_mask);

Tensor unified_loss(Tape& tape, const Tensor& l_lang, const Tensor& l_diff, const LossWeights& lw);

}  // namespace mobo::objectives
