// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mobo/errors.hpp"
#include "mobo/trainer/optim.hpp"

namespace mobo::trainer {

void adamw_update(std::span<double> param, std::span<const double> grad, Moments& mom, std::uint64_t t, double lr,
                  const OptimConfig& cfg) {
  if (!grad.empty() && grad.size() != param.size()) {
    throw DimensionError("adamw: parameter has " + std::to_string(param.size()) + " values, gradient " +
                         std::to_string(grad.size()));
  }
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0);
    mom.v.assign(param.size(), 0.0);
  }
  if (mom.m.size() != param.size() || mom.v.size() != param.size()) {
    throw DimensionError("adamw: moment buffers do not match the parameter size");
  }
  if (t < 1) throw ContractError("adamw: step must be >= 1");
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
    mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
    const double mhat = mom.m[i] / c1;
    const double vhat = mom.v[i] / c2;
    param[i] -= lr * cfg.weight_decay * param[i] + lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void adamw_step(const NamedTensors& params, AdamWState& state, double lr, const OptimConfig& cfg) {
  ++state.step;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    std::span<const double> g = t.has_grad() ? t.grad() : std::span<const double>();
    adamw_update(t.mutable_data(), g, state.moments[p.name], state.step, lr, cfg);
  }
}

double clip_grad_norm(const NamedTensors& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params)
      if (p.tensor.has_grad())
        for (double& g : p.tensor.grad_buffer()) g *= s;
  }
  return norm;
}

}  // namespace mobo::trainer
