// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mobo/numerics/tensor.hpp"
#include "mobo/trainer/config.hpp"

namespace mobo::trainer {

/// Linear warmup 0 -> lr0 over warmup_ratio * total steps, then cosine
/// decay to lr_min at `total`. Out-of-range steps are clamped.
double cosine_lr(long long step, long long total, double warmup_ratio, double lr0, double lr_min);

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamWState {
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;  // keyed by parameter name
};

/// One decoupled-weight-decay Adam update of a single buffer at step t
/// (1-based). Throws DimensionError on size mismatches.
void adamw_update(std::span<double> param, std::span<const double> grad, Moments& mom, std::uint64_t t, double lr,
                  const OptimConfig& cfg);

/// Advances state.step and updates every tensor from its gradient buffer
/// (a missing buffer counts as zero gradient).
void adamw_step(const NamedTensors& params, AdamWState& state, double lr, const OptimConfig& cfg);

/// Global L2 norm of the gradients; scales them down to `max_norm` when
/// larger. Returns the norm before clipping.
double clip_grad_norm(const NamedTensors& params, double max_norm);

}  // namespace mobo::trainer
