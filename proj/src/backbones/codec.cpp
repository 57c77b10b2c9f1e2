// SPDX-License-Identifier: Apache-2.0
#include "mobo/backbones/codec.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "mobo/errors.hpp"

namespace mobo::backbones {

Image Image::blank(std::size_t h, std::size_t w, std::size_t c) {
  Image img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.pixels.assign(h * w * c, 0.0);
  return img;
}

void CodecConfig::validate() const {
  if (patch == 0 || height == 0 || width == 0 || channels == 0) throw ConfigError("codec: zero dimension");
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("codec: image " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by patch " + std::to_string(patch));
  }
}

Codec::Codec(CodecConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t n = cfg_.latent_dim();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates keeps the permutation independent of the
  // standard library's shuffle implementation.
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
  mix_ = Tensor::zeros({n, n});
  auto m = mix_.mutable_data();
  for (std::size_t j = 0; j < n; ++j) m[perm[j] * n + j] = (rng() & 1) ? -1.0 : 1.0;
  rebuild_index();
}

Codec Codec::from_mix(CodecConfig cfg, const Tensor& mix) {
  Codec c(cfg);
  const std::size_t n = cfg.latent_dim();
  if (mix.shape() != Shape{n, n}) throw FormatError("codec mix has shape " + shape_str(mix.shape()));
  c.mix_ = mix.clone();
  c.rebuild_index();
  return c;
}

void Codec::rebuild_index() {
  const std::size_t n = cfg_.latent_dim();
  perm_.assign(n, 0);
  sign_.assign(n, 0.0);
  std::vector<bool> used(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = mix_.at(i, j);
      if (v == 0.0) continue;
      if ((v != 1.0 && v != -1.0) || used[i]) throw FormatError("codec mix is not a signed permutation");
      perm_[j] = i;
      sign_[j] = v;
      used[i] = true;
      ++hits;
    }
    if (hits != 1) throw FormatError("codec mix is not a signed permutation");
  }
}

Tensor Codec::encode(const Image& img) const {
  if (img.height != cfg_.height || img.width != cfg_.width || img.channels != cfg_.channels) {
    throw DimensionError("codec: image " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                         std::to_string(img.channels) + " does not match codec config");
  }
  const std::size_t p = cfg_.patch, c = cfg_.channels, n = cfg_.latent_dim();
  const std::size_t gx = cfg_.width / p;
  Tensor out = Tensor::zeros({cfg_.tokens(), n});
  auto o = out.mutable_data();
  std::vector<double> patch(n);
  for (std::size_t t = 0; t < cfg_.tokens(); ++t) {
    const std::size_t y0 = (t / gx) * p, x0 = (t % gx) * p;
    std::size_t i = 0;
    for (std::size_t dy = 0; dy < p; ++dy)
      for (std::size_t dx = 0; dx < p; ++dx)
        for (std::size_t ch = 0; ch < c; ++ch) patch[i++] = img.at(y0 + dy, x0 + dx, ch);
    for (std::size_t j = 0; j < n; ++j) o[t * n + j] = sign_[j] * patch[perm_[j]];
  }
  return out;
}

Image Codec::decode(const Tensor& latent) const {
  const std::size_t p = cfg_.patch, c = cfg_.channels, n = cfg_.latent_dim();
  if (latent.shape() != Shape{cfg_.tokens(), n}) {
    throw DimensionError("codec: latent " + shape_str(latent.shape()) + " does not match [" +
                         std::to_string(cfg_.tokens()) + "x" + std::to_string(n) + "]");
  }
  Image img = Image::blank(cfg_.height, cfg_.width, c);
  const std::size_t gx = cfg_.width / p;
  auto l = latent.data();
  std::vector<double> patch(n);
  for (std::size_t t = 0; t < cfg_.tokens(); ++t) {
    for (std::size_t j = 0; j < n; ++j) patch[perm_[j]] = sign_[j] * l[t * n + j];
    const std::size_t y0 = (t / gx) * p, x0 = (t % gx) * p;
    std::size_t i = 0;
    for (std::size_t dy = 0; dy < p; ++dy)
      for (std::size_t dx = 0; dx < p; ++dx)
        for (std::size_t ch = 0; ch < c; ++ch) img.at(y0 + dy, x0 + dx, ch) = patch[i++];
  }
  return img;
}

}  // namespace mobo::backbones
