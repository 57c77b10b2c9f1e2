// SPDX-License-Identifier: Apache-2.0
#include "mobo/backbones/dense.hpp"

#include "mobo/errors.hpp"
#include "mobo/mcp/mcp.hpp"

namespace mobo::backbones {

Tensor normal_init(Shape shape, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = n(rng);
  return t;
}

Dense Dense::init(std::size_t in, std::size_t out, bool bias, std::mt19937_64& rng) {
  Dense d;
  d.w = mcp::uniform_init({in, out}, in, rng);
  if (bias) d.b = Tensor::zeros({out});
  return d;
}

Tensor Dense::forward(Tape& tape, const Tensor& x) const {
  Tensor y = ops::linear(tape, x, w, b);
  if (!lora) return y;
  Tensor delta = ops::matmul(tape, ops::matmul(tape, x, lora->a), lora->b);
  return ops::add(tape, y, ops::scale(tape, delta, lora->scale()));
}

Tensor Dense::effective_weight() const {
  Tensor out = w.clone();
  if (!lora) return out;
  Tape tape(false);
  Tensor ab = ops::matmul(tape, lora->a, lora->b);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += lora->scale() * ab[i];
  return out;
}

void Dense::wrap(std::size_t rank, double alpha, std::mt19937_64& rng) {
  if (lora) throw ConfigError("dense layer is already wrapped with a LoRA adapter");
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  auto ad = std::make_shared<LoraAdapter>();
  ad->a = mcp::uniform_init({in(), rank}, in(), rng);
  ad->b = Tensor::zeros({rank, out()});
  ad->rank = rank;
  ad->alpha = alpha;
  lora = std::move(ad);
}

}  // namespace mobo::backbones
