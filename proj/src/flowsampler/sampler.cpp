// SPDX-License-Identifier: Apache-2.0
#include "mobo/flowsampler/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "mobo/errors.hpp"

namespace mobo::flowsampler {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

void SamplerConfig::validate() const {
  if (steps < 1) throw ConfigError("sampler: steps must be >= 1");
  if (schedule.empty()) return;
  if (schedule.size() != steps + 1) throw ConfigError("sampler: schedule needs steps + 1 values");
  if (schedule.front() != 1.0 || schedule.back() != 0.0) throw ConfigError("sampler: schedule must run 1 -> 0");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (!(schedule[i] < schedule[i - 1])) throw ConfigError("sampler: schedule must be strictly decreasing");
}

std::vector<double> SamplerConfig::sigmas() const {
  validate();
  if (!schedule.empty()) return schedule;
  std::vector<double> s(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) s[i] = 1.0 - static_cast<double>(i) / static_cast<double>(steps);
  s.back() = 0.0;
  return s;
}

Tensor seeded_noise(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = n(rng);
  return t;
}

Tensor euler_integrate(const VelocityFn& v, Tensor x0, const mcp::ConditioningSequence& cond,
                       const SamplerConfig& cfg, SampleTrace* trace) {
  const std::vector<double> grid = cfg.sigmas();
  Tensor x = x0.clone();
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const auto t0 = Clock::now();
    Tensor vel = v(x, grid[i], cond);
    if (vel.shape() != x.shape()) {
      throw DimensionError("euler: velocity " + shape_str(vel.shape()) + " for latent " + shape_str(x.shape()));
    }
    const double dt = grid[i + 1] - grid[i];
    auto xd = x.mutable_data();
    auto vd = vel.data();
    for (std::size_t j = 0; j < xd.size(); ++j) {
      if (!std::isfinite(vd[j])) {
        throw NumericalError("euler: non-finite velocity at step " + std::to_string(i) + " (sigma " +
                             std::to_string(grid[i]) + ")");
      }
      xd[j] += dt * vd[j];
    }
    if (trace) {
      ++trace->evaluations;
      trace->sigmas_visited.push_back(grid[i]);
      trace->step_ms.push_back(ms_since(t0));
    }
  }
  if (trace) trace->sigmas_visited.push_back(grid.back());
  return x;
}

Tensor euler_sample(const VelocityFn& v, const mcp::ConditioningSequence& cond, const SamplerConfig& cfg,
                    Shape latent_shape, SampleTrace* trace) {
  return euler_integrate(v, seeded_noise(std::move(latent_shape), cfg.seed), cond, cfg, trace);
}

std::vector<backbones::Image> generate_batch(const std::vector<std::vector<std::size_t>>& prompts,
                                             const backbones::ModelSet& model, const SamplerConfig& cfg,
                                             const std::vector<std::uint64_t>& seeds, GenerateTiming* timing,
                                             SampleTrace* trace) {
  if (prompts.size() != seeds.size()) throw ContractError("generate: one seed per prompt required");
  if (prompts.empty()) return {};
  const auto start = Clock::now();
  GenerateTiming tm;

  auto t0 = Clock::now();
  std::vector<backbones::VlmSequence> seqs;
  for (const auto& p : prompts) seqs.push_back({Tensor(), p});
  Tape tape(false);
  auto out = backbones::vlm_forward(tape, model.vlm, seqs, false);
  tm.vlm_ms = ms_since(t0);

  t0 = Clock::now();
  auto cond = model.condition(tape, out.stack);
  tm.mcp_ms = ms_since(t0);

  const std::size_t tokens = model.cfg.dit.tokens, dim = model.cfg.dit.latent_dim;
  Tensor x0 = Tensor::zeros({prompts.size() * tokens, dim});
  for (std::size_t b = 0; b < prompts.size(); ++b) {
    Tensor n = seeded_noise({tokens, dim}, seeds[b]);
    std::copy(n.data().begin(), n.data().end(), x0.mutable_data().begin() + b * tokens * dim);
  }
  VelocityFn vel = [&](const Tensor& x, double sigma, const mcp::ConditioningSequence& c) {
    Tape t(false);
    std::vector<double> sig(prompts.size(), sigma);
    return backbones::dit_velocity(t, model.dit, x, sig, c);
  };
  SampleTrace local;
  SampleTrace& tr = trace ? *trace : local;
  const std::size_t before = tr.step_ms.size();
  Tensor lat = euler_integrate(vel, x0, cond, cfg, &tr);
  tm.dit_step_ms.assign(tr.step_ms.begin() + static_cast<std::ptrdiff_t>(before), tr.step_ms.end());

  t0 = Clock::now();
  std::vector<backbones::Image> images;
  for (std::size_t b = 0; b < prompts.size(); ++b) {
    std::vector<double> rows(lat.data().begin() + b * tokens * dim, lat.data().begin() + (b + 1) * tokens * dim);
    auto img = model.codec.decode(Tensor::from({tokens, dim}, std::move(rows)));
    for (double& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
    images.push_back(std::move(img));
  }
  tm.decode_ms = ms_since(t0);
  tm.total_ms = ms_since(start);
  if (timing) *timing = tm;
  return images;
}

backbones::Image generate(const std::vector<std::size_t>& prompt, const backbones::ModelSet& model,
                          const SamplerConfig& cfg, GenerateTiming* timing, SampleTrace* trace) {
  return generate_batch({prompt}, model, cfg, {cfg.seed}, timing, trace).front();
}

}  // namespace mobo::flowsampler
