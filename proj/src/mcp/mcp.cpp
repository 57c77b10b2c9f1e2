// SPDX-License-Identifier: Apache-2.0
#include "mobo/mcp/mcp.hpp"

#include <cmath>
#include <numbers>

#include "mobo/errors.hpp"

namespace mobo::mcp {

std::string to_string(FusionMode mode) { return mode == FusionMode::uniform ? "uniform" : "learnable"; }

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "uniform") return FusionMode::uniform;
  if (s == "learnable") return FusionMode::learnable;
  throw ConfigError("unknown fusion mode '" + s + "' (expected uniform or learnable)");
}

void McpConfig::validate() const {
  if (d_vlm < 1 || d_h < 1 || d_cond < 1 || K < 1 || kernel_k < 1 || reduction_r < 1) {
    throw ConfigError("mcp: all sizes must be >= 1");
  }
  if (kernel_k % 2 == 0) throw ConfigError("mcp: kernel_k must be odd, got " + std::to_string(kernel_k));
  if (d_h % reduction_r != 0) {
    throw ConfigError("mcp: reduction_r " + std::to_string(reduction_r) + " does not divide d_h " +
                      std::to_string(d_h));
  }
  if (!(tau_min > 0.0) || !(tau0 >= tau_min)) throw ConfigError("mcp: need tau0 >= tau_min > 0");
}

Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = u(rng);
  return t;
}

McpParams init_params(const McpConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t dh = cfg.d_h, hid = cfg.d_h / cfg.reduction_r;
  McpParams p;
  p.fusion.w = Tensor::zeros({cfg.K});
  p.fusion.tau = cfg.tau0;
  p.w_c = uniform_init({cfg.d_vlm, dh}, cfg.d_vlm, rng);
  p.ln_c_gain = Tensor::full({dh}, 1.0);
  p.ln_c_bias = Tensor::zeros({dh});

  RefineParams& r = p.refine;
  r.depthwise = Tensor::zeros({dh, cfg.kernel_k});
  for (std::size_t c = 0; c < dh; ++c) r.depthwise.mutable_data()[c * cfg.kernel_k + cfg.kernel_k / 2] = 1.0;
  r.pw_weight = uniform_init({dh, dh}, dh, rng);
  r.pw_bias = Tensor::zeros({dh});
  r.gate_w1 = uniform_init({dh, hid}, dh, rng);
  r.gate_b1 = Tensor::zeros({hid});
  r.gate_w2 = uniform_init({hid, dh}, hid, rng);
  r.gate_b2 = Tensor::full({dh}, -2.0);

  p.w_o = uniform_init({dh, cfg.d_cond}, dh, rng);
  p.ln_o_gain = Tensor::full({cfg.d_cond}, 1.0);
  p.ln_o_bias = Tensor::zeros({cfg.d_cond});
  return p;
}

NamedTensors McpParams::named(const McpConfig& cfg) const {
  NamedTensors out;
  if (cfg.fusion_mode == FusionMode::learnable) out.push_back({"fusion.w", fusion.w});
  out.push_back({"compress.w", w_c});
  out.push_back({"compress.ln.gain", ln_c_gain});
  out.push_back({"compress.ln.bias", ln_c_bias});
  if (cfg.refine_enabled) {
    out.push_back({"refine.depthwise", refine.depthwise});
    out.push_back({"refine.pointwise.w", refine.pw_weight});
    out.push_back({"refine.pointwise.b", refine.pw_bias});
    out.push_back({"refine.gate.w1", refine.gate_w1});
    out.push_back({"refine.gate.b1", refine.gate_b1});
    out.push_back({"refine.gate.w2", refine.gate_w2});
    out.push_back({"refine.gate.b2", refine.gate_b2});
  }
  out.push_back({"project.w", w_o});
  out.push_back({"project.ln.gain", ln_o_gain});
  out.push_back({"project.ln.bias", ln_o_bias});
  return out;
}

Tensor fuse_layers(Tape& tape, const HiddenStack& stack, const FusionWeights& fw, const McpConfig& cfg) {
  const std::size_t L = stack.layers.size();
  if (L < cfg.K) {
    throw ConfigError("fuse_layers: stack has " + std::to_string(L) + " layers, K = " + std::to_string(cfg.K));
  }
  std::span<const Tensor> last(stack.layers.data() + (L - cfg.K), cfg.K);
  if (cfg.K == 1) return last.front();
  Tensor alpha = cfg.fusion_mode == FusionMode::learnable
                     ? ops::softmax_temperature(tape, fw.w, fw.tau)
                     : Tensor::full({cfg.K}, 1.0 / static_cast<double>(cfg.K));
  return ops::weighted_sum(tape, last, alpha);
}

Tensor compress(Tape& tape, const Tensor& h_fuse, const Tensor& w_c, const Tensor& gain, const Tensor& bias) {
  return ops::layer_norm(tape, ops::matmul(tape, h_fuse, w_c), gain, bias);
}

Tensor seq_refine(Tape& tape, const Tensor& htil, const RefineParams& p, const Segments& segs) {
  Tensor r = ops::conv1d_depthwise(tape, htil, p.depthwise, segs);
  r = ops::conv1d_pointwise(tape, r, p.pw_weight, p.pw_bias);
  Tensor pooled = ops::segment_mean(tape, r, segs);
  Tensor hidden = ops::gelu(tape, ops::linear(tape, pooled, p.gate_w1, p.gate_b1));
  Tensor gates = ops::sigmoid(tape, ops::linear(tape, hidden, p.gate_w2, p.gate_b2));
  return ops::add(tape, htil, ops::segment_scale(tape, r, gates, segs));
}

ConditioningSequence project_out(Tape& tape, const Tensor& htil, const Tensor& w_o, const Tensor& gain,
                                 const Tensor& bias, const Segments& segs) {
  ConditioningSequence out;
  out.E = ops::layer_norm(tape, ops::matmul(tape, htil, w_o), gain, bias);
  out.segs = segs;
  return out;
}

ConditioningSequence mcp_forward(Tape& tape, const HiddenStack& stack, const McpParams& p, const McpConfig& cfg) {
  Tensor h = fuse_layers(tape, stack, p.fusion, cfg);
  h = compress(tape, h, p.w_c, p.ln_c_gain, p.ln_c_bias);
  if (cfg.refine_enabled) h = seq_refine(tape, h, p.refine, stack.segs);
  return project_out(tape, h, p.w_o, p.ln_o_gain, p.ln_o_bias, stack.segs);
}

double anneal_temperature(long long step, long long total_steps, const McpConfig& cfg) {
  if (total_steps < 1) throw ConfigError("anneal_temperature: total_steps must be >= 1");
  if (step <= 0) return cfg.tau0;
  if (step >= total_steps) return cfg.tau_min;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.tau_min + 0.5 * (cfg.tau0 - cfg.tau_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

std::uint64_t refine_param_count(const McpConfig& cfg) {
  const std::uint64_t dh = cfg.d_h, hid = cfg.d_h / cfg.reduction_r;
  return dh * cfg.kernel_k + dh * dh + dh + 2 * dh * hid + hid + dh;
}

std::uint64_t param_count(const McpConfig& cfg) {
  cfg.validate();
  std::uint64_t n = 0;
  if (cfg.fusion_mode == FusionMode::learnable) n += cfg.K;
  n += static_cast<std::uint64_t>(cfg.d_vlm) * cfg.d_h + 2 * cfg.d_h;
  if (cfg.refine_enabled) n += refine_param_count(cfg);
  n += static_cast<std::uint64_t>(cfg.d_h) * cfg.d_cond + 2 * cfg.d_cond;
  return n;
}

double FlopReport::per_token() const {
  return static_cast<double>(per_token_dense()) +
         (tokens > 0 ? static_cast<double>(gate_mlp) / static_cast<double>(tokens) : 0.0);
}

FlopReport flop_estimate(std::size_t n_tokens, const McpConfig& cfg) {
  cfg.validate();
  const std::uint64_t dv = cfg.d_vlm, dh = cfg.d_h, dc = cfg.d_cond;
  FlopReport r;
  r.tokens = n_tokens;
  r.compress = 2 * dv * dh;
  r.project = 2 * dh * dc;
  if (cfg.refine_enabled) {
    r.depthwise = 2 * cfg.kernel_k * dh;
    r.pointwise = 2 * dh * dh;
    r.gate_mlp = 4 * dh * (dh / cfg.reduction_r);
  }
  r.reference_per_token = 2 * dv * (4 * dv) + 2 * (4 * dv) * dc;
  return r;
}

MlpConnectorParams init_mlp_connector(const McpConfig& cfg, std::mt19937_64& rng) {
  const std::size_t hid = 4 * cfg.d_vlm;
  MlpConnectorParams p;
  p.w1 = uniform_init({cfg.d_vlm, hid}, cfg.d_vlm, rng);
  p.b1 = Tensor::zeros({hid});
  p.w2 = uniform_init({hid, cfg.d_cond}, hid, rng);
  p.b2 = Tensor::zeros({cfg.d_cond});
  return p;
}

NamedTensors MlpConnectorParams::named() const {
  return {{"mlp.w1", w1}, {"mlp.b1", b1}, {"mlp.w2", w2}, {"mlp.b2", b2}};
}

ConditioningSequence mlp_connector_forward(Tape& tape, const HiddenStack& stack, const MlpConnectorParams& p) {
  if (stack.layers.empty()) throw ConfigError("mlp connector: empty hidden stack");
  Tensor h = ops::gelu(tape, ops::linear(tape, stack.layers.back(), p.w1, p.b1));
  ConditioningSequence out;
  out.E = ops::linear(tape, h, p.w2, p.b2);
  out.segs = stack.segs;
  return out;
}

std::uint64_t mlp_connector_param_count(const McpConfig& cfg) {
  const std::uint64_t dv = cfg.d_vlm, hid = 4 * cfg.d_vlm, dc = cfg.d_cond;
  return dv * hid + hid + hid * dc + dc;
}

}  // namespace mobo::mcp
