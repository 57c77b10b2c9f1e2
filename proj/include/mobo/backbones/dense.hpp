// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>

#include "mobo/numerics/ops.hpp"

namespace mobo::backbones {

struct LoraAdapter {
  Tensor a;  // [in x r]
  Tensor b;  // [r x out], zero at wrap time
  std::size_t rank = 0;
  double alpha = 0.0;
  double scale() const { return alpha / static_cast<double>(rank); }
};

/// y = x W + b, plus (alpha / r) (x A) B once wrapped with an adapter.
struct Dense {
  Tensor w;  // [in x out]
  Tensor b;  // [out], may be undefined
  std::shared_ptr<LoraAdapter> lora;

  static Dense init(std::size_t in, std::size_t out, bool bias, std::mt19937_64& rng);

  std::size_t in() const { return w.rows(); }
  std::size_t out() const { return w.cols(); }
  Tensor forward(Tape& tape, const Tensor& x) const;
  /// W + (alpha / r) A B as a plain matrix.
  Tensor effective_weight() const;

  /// Attaches an adapter; throws ConfigError if one is already attached.
  void wrap(std::size_t rank, double alpha, std::mt19937_64& rng);
};

/// Entries drawn from N(0, sd^2).
Tensor normal_init(Shape shape, double sd, std::mt19937_64& rng);

}  // namespace mobo::backbones
