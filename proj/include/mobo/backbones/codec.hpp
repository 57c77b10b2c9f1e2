// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mobo/numerics/tensor.hpp"

namespace mobo::backbones {

/// Interleaved RGB image (row-major, channel fastest) with values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> pixels;

  static Image blank(std::size_t h, std::size_t w, std::size_t c = 3);
  double& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * width + x) * channels + ch]; }
  double at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * width + x) * channels + ch]; }
  bool operator==(const Image&) const = default;
};

struct CodecConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;
  std::size_t patch = 4;

  std::size_t tokens() const { return (height / patch) * (width / patch); }
  std::size_t latent_dim() const { return patch * patch * channels; }
  void validate() const;
};

/// Fixed lossless latent map: each patch is flattened (y, x, channel) and
/// multiplied by a signed permutation matrix. Applied index-wise so that
/// round trips are exact.
class Codec {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eedc0dec0ffeeULL;

  explicit Codec(CodecConfig cfg = {}, std::uint64_t seed = kDefaultSeed);
  /// Rebuilds a codec from a stored mix matrix; throws FormatError if the
  /// matrix is not a signed permutation of the right size.
  static Codec from_mix(CodecConfig cfg, const Tensor& mix);

  const CodecConfig& config() const { return cfg_; }
  /// [latent_dim x latent_dim]; latent row = patch vector * mix.
  const Tensor& mix() const { return mix_; }

  Tensor encode(const Image& img) const;  // [tokens x latent_dim]
  Image decode(const Tensor& latent) const;

 private:
  void rebuild_index();

  CodecConfig cfg_;
  Tensor mix_;
  std::vector<std::size_t> perm_;  // latent j reads patch element perm_[j]
  std::vector<double> sign_;
};

}  // namespace mobo::backbones
