// SPDX-License-Identifier: Apache-2.0
#include "mobo/objectives/objectives.hpp"

#include <cmath>

#include "mobo/errors.hpp"

namespace mobo::objectives {

std::string to_string(SigmaWeighting w) {
  return w == SigmaWeighting::constant ? "constant" : "inverse_quadratic";
}

SigmaWeighting sigma_weighting_from_string(const std::string& s) {
  if (s == "constant") return SigmaWeighting::constant;
  if (s == "inverse_quadratic") return SigmaWeighting::inverse_quadratic;
  throw ConfigError("unknown sigma weighting '" + s + "' (expected constant or inverse_quadratic)");
}

void LossWeights::validate() const {
  if (!(lambda_lang >= 0.0) || !(lambda_diff >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (lambda_lang == 0.0 && lambda_diff == 0.0) throw ConfigError("loss weights are both zero");
}

double LossWeights::w(double sigma) const {
  if (w_sigma_kind == SigmaWeighting::constant) return 1.0;
  return 1.0 / (sigma * sigma + 0.01);
}

FlowSample make_flow_sample(const Tensor& x, const Tensor& eps, std::vector<double> sigmas) {
  if (x.shape() != eps.shape()) {
    throw DimensionError("flow sample: x " + shape_str(x.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  if (sigmas.empty() || x.rank() != 2 || x.rows() % sigmas.size() != 0) {
    throw DimensionError("flow sample: " + shape_str(x.shape()) + " cannot hold " + std::to_string(sigmas.size()) +
                         " samples");
  }
  FlowSample fs;
  fs.x = x;
  fs.eps = eps;
  fs.rows_per_sample = x.rows() / sigmas.size();
  fs.sigmas = std::move(sigmas);
  const std::size_t per = fs.rows_per_sample * x.cols();
  std::vector<double> xs(x.numel()), vs(x.numel());
  auto xd = x.data();
  auto ed = eps.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double s = fs.sigmas[i / per];
    xs[i] = (1.0 - s) * xd[i] + s * ed[i];
    vs[i] = ed[i] - xd[i];
  }
  fs.x_sigma = Tensor::from(x.shape(), std::move(xs));
  fs.v_star = Tensor::from(x.shape(), std::move(vs));
  return fs;
}

FlowSample flow_sample(const Tensor& x, std::size_t samples, std::mt19937_64& rng, SigmaDist dist) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(dist.lo, dist.hi);
  Tensor eps = Tensor::zeros(x.shape());
  for (double& e : eps.mutable_data()) e = normal(rng);
  std::vector<double> sigmas(samples);
  for (double& s : sigmas) s = uniform(rng);
  return make_flow_sample(x, eps, std::move(sigmas));
}

Tensor flow_matching_loss(Tape& tape, const Tensor& pred, const FlowSample& fs, const LossWeights& lw) {
  if (pred.shape() != fs.v_star.shape()) {
    throw DimensionError("flow_matching_loss: pred " + shape_str(pred.shape()) + " vs target " +
                         shape_str(fs.v_star.shape()));
  }
  // weighted_mse divides by the total element count; the per-row weight
  // w(sigma_b) then averages the per-sample means.
  std::vector<double> row_w(pred.rows());
  for (std::size_t r = 0; r < row_w.size(); ++r) row_w[r] = lw.w(fs.sigmas[r / fs.rows_per_sample]);
  return ops::weighted_mse(tape, pred, fs.v_star, row_w);
}

Tensor i2t_loss(Tape& tape, const Tensor& logits, std::span<const std::size_t> targets,
                std::span<const std::uint8_t> answer_mask) {
  return ops::cross_entropy(tape, logits, targets, answer_mask);
}

Tensor unified_loss(Tape& tape, const Tensor& l_lang, const Tensor& l_diff, const LossWeights& lw) {
  return ops::add(tape, ops::scale(tape, l_lang, lw.lambda_lang), ops::scale(tape, l_diff, lw.lambda_diff));
}

}  // namespace mobo::objectives
