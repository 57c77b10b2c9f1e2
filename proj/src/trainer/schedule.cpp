// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include "mobo/trainer/optim.hpp"

namespace mobo::trainer {

double cosine_lr(long long step, long long total, double warmup_ratio, double lr0, double lr_min) {
  if (total <= 0) return lr0;
  step = std::clamp(step, 0LL, total);
  const double warm = std::clamp(warmup_ratio, 0.0, 1.0) * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s < warm) return lr0 * s / warm;
  const double span = static_cast<double>(total) - warm;
  if (span <= 0.0) return lr_min;
  const double p = (s - warm) / span;
  if (p <= 0.0) return lr0;
  if (p >= 1.0) return lr_min;
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * p));
}

}  // namespace mobo::trainer
