// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mobo/backbones/model_set.hpp"

namespace mobo::flowsampler {

struct SamplerConfig {
  std::size_t steps = 20;
  std::uint64_t seed = 0;
  /// Optional explicit grid; empty means linear from 1 to 0 over `steps`.
  std::vector<double> schedule;

  void validate() const;
  /// The sigma grid actually used: steps + 1 values from 1 down to 0.
  std::vector<double> sigmas() const;
};

/// v(x, sigma, cond); x may hold a batch of latents stacked along rows.
using VelocityFn = std::function<Tensor(const Tensor&, double, const mcp::ConditioningSequence&)>;

struct SampleTrace {
  std::size_t evaluations = 0;
  std::vector<double> sigmas_visited;
  std::vector<double> step_ms;
};

/// Standard-normal latent drawn from `seed`.
Tensor seeded_noise(Shape shape, std::uint64_t seed);

/// Euler integration from `x0` at sigma = 1 to sigma = 0. Throws
/// NumericalError naming the step if the velocity is not finite.
Tensor euler_integrate(const VelocityFn& v, Tensor x0, const mcp::ConditioningSequence& cond,
                       const SamplerConfig& cfg, SampleTrace* trace = nullptr);

/// euler_integrate starting from seeded_noise(shape, cfg.seed).
Tensor euler_sample(const VelocityFn& v, const mcp::ConditioningSequence& cond, const SamplerConfig& cfg,
                    Shape latent_shape, SampleTrace* trace = nullptr);

struct GenerateTiming {
  double vlm_ms = 0;
  double mcp_ms = 0;
  std::vector<double> dit_step_ms;
  double decode_ms = 0;
  double total_ms = 0;
};

/// Prompt -> VLM -> connector -> Euler sampling with the DiT -> codec
/// decode, clamped to [0, 1]. One noise seed per prompt.
std::vector<backbones::Image> generate_batch(const std::vector<std::vector<std::size_t>>& prompts,
                                             const backbones::ModelSet& model, const SamplerConfig& cfg,
                                             const std::vector<std::uint64_t>& seeds,
                                             GenerateTiming* timing = nullptr, SampleTrace* trace = nullptr);

backbones::Image generate(const std::vector<std::size_t>& prompt, const backbones::ModelSet& model,
                          const SamplerConfig& cfg, GenerateTiming* timing = nullptr, SampleTrace* trace = nullptr);

/// Binary PPM (P6, maxval 255). Writing clamps to [0, 1] and rounds.
void write_ppm(const std::filesystem::path& path, const backbones::Image& img);
std::vector<unsigned char> encode_ppm(const backbones::Image& img);
/// Throws IoError if unreadable, FormatError if malformed.
backbones::Image read_ppm(const std::filesystem::path& path);
backbones::Image decode_ppm(const std::vector<unsigned char>& bytes);

}  // namespace mobo::flowsampler
