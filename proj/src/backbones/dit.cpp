// SPDX-License-Identifier: Apache-2.0
#include "mobo/backbones/dit.hpp"

#include <cmath>

#include "mobo/errors.hpp"

namespace mobo::backbones {

void DitConfig::validate() const {
  if (tokens < 1 || latent_dim < 1 || width < 2 || blocks < 1 || mlp_ratio < 1 || d_cond < 1) {
    throw ConfigError("dit: invalid sizes");
  }
  if (sigma_features < 2 || sigma_features % 2 != 0) throw ConfigError("dit: sigma_features must be even");
  if (!(sigma_data >= 0.0)) throw ConfigError("dit: sigma_data must be >= 0");
}

namespace {

void push_dense(std::vector<ParamEntry>& out, const std::string& name, const Dense& d) {
  out.push_back({name + ".w", Component::dit, d.w});
  if (d.b.defined()) out.push_back({name + ".b", Component::dit, d.b});
}

void push_ln(std::vector<ParamEntry>& out, const std::string& name, const Tensor& g, const Tensor& b) {
  out.push_back({name + ".gain", Component::dit, g});
  out.push_back({name + ".bias", Component::dit, b});
}

}  // namespace

ToyDit ToyDit::init(const DitConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ToyDit m;
  m.cfg = cfg;
  const std::size_t w = cfg.width, hid = cfg.width * cfg.mlp_ratio;
  m.in_proj = Dense::init(cfg.latent_dim, w, true, rng);
  m.pos = normal_init({cfg.tokens, w}, 1.0, rng);
  m.sigma_proj = Dense::init(cfg.sigma_features, w, true, rng);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    DitBlock b;
    b.ln1_g = Tensor::full({w}, 1.0);
    b.ln1_b = Tensor::zeros({w});
    b.q = Dense::init(w, w, true, rng);
    b.k = Dense::init(w, w, true, rng);
    b.v = Dense::init(w, w, true, rng);
    b.o = Dense::init(w, w, true, rng);
    b.ln2_g = Tensor::full({w}, 1.0);
    b.ln2_b = Tensor::zeros({w});
    b.cq = Dense::init(w, w, true, rng);
    b.ck = Dense::init(cfg.d_cond, w, true, rng);
    b.cv = Dense::init(cfg.d_cond, w, true, rng);
    b.co = Dense::init(w, w, true, rng);
    b.ln3_g = Tensor::full({w}, 1.0);
    b.ln3_b = Tensor::zeros({w});
    b.fc1 = Dense::init(w, hid, true, rng);
    b.fc2 = Dense::init(hid, w, true, rng);
    m.blocks.push_back(std::move(b));
  }
  m.lnf_g = Tensor::full({w}, 1.0);
  m.lnf_b = Tensor::zeros({w});
  m.out = Dense::init(w, cfg.latent_dim, true, rng);
  return m;
}

void ToyDit::collect(std::vector<ParamEntry>& dst) const {
  push_dense(dst, "dit.in_proj", in_proj);
  dst.push_back({"dit.pos", Component::dit, pos});
  push_dense(dst, "dit.sigma_proj", sigma_proj);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const DitBlock& b = blocks[i];
    const std::string p = "dit.block" + std::to_string(i);
    push_ln(dst, p + ".ln1", b.ln1_g, b.ln1_b);
    push_dense(dst, p + ".q", b.q);
    push_dense(dst, p + ".k", b.k);
    push_dense(dst, p + ".v", b.v);
    push_dense(dst, p + ".o", b.o);
    push_ln(dst, p + ".ln2", b.ln2_g, b.ln2_b);
    push_dense(dst, p + ".cq", b.cq);
    push_dense(dst, p + ".ck", b.ck);
    push_dense(dst, p + ".cv", b.cv);
    push_dense(dst, p + ".co", b.co);
    push_ln(dst, p + ".ln3", b.ln3_g, b.ln3_b);
    push_dense(dst, p + ".fc1", b.fc1);
    push_dense(dst, p + ".fc2", b.fc2);
  }
  push_ln(dst, "dit.lnf", lnf_g, lnf_b);
  push_dense(dst, "dit.out", out);
}

Tensor sigma_features(std::span<const double> sigmas, std::size_t features) {
  const std::size_t half = features / 2;
  Tensor f = Tensor::zeros({sigmas.size(), features});
  auto d = f.mutable_data();
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    const double t = 1000.0 * sigmas[s];
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(1000.0) * static_cast<double>(i) / static_cast<double>(half));
      d[s * features + i] = std::sin(t * freq);
      d[s * features + half + i] = std::cos(t * freq);
    }
  }
  return f;
}

double skip_coefficient(double sigma, double sigma_data) {
  const double s2 = sigma_data * sigma_data, a = 1.0 - sigma;
  return (sigma - a * s2) / (sigma * sigma + a * a * s2);
}

Tensor dit_velocity(Tape& tape, const ToyDit& dit, const Tensor& x_sigma, std::span<const double> sigmas,
                    const mcp::ConditioningSequence& cond) {
  const DitConfig& cfg = dit.cfg;
  const std::size_t batch = sigmas.size();
  if (x_sigma.rank() != 2 || x_sigma.cols() != cfg.latent_dim || x_sigma.rows() != batch * cfg.tokens) {
    throw DimensionError("dit_velocity: latent " + shape_str(x_sigma.shape()) + " for " + std::to_string(batch) +
                         " samples of [" + std::to_string(cfg.tokens) + "x" + std::to_string(cfg.latent_dim) +
                         "]");
  }
  if (!cond.E.defined() || cond.E.rank() != 2 || cond.E.cols() != cfg.d_cond) {
    throw DimensionError("dit_velocity: conditioning width " +
                         (cond.E.defined() ? shape_str(cond.E.shape()) : std::string("<none>")) + ", expected " +
                         std::to_string(cfg.d_cond));
  }
  if (cond.segs.count() != batch) throw DimensionError("dit_velocity: conditioning segment count != batch");
  const Segments lat = Segments::uniform(batch, cfg.tokens);

  std::vector<std::size_t> pos_ids(batch * cfg.tokens);
  for (std::size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = i % cfg.tokens;
  Tensor h = dit.in_proj.forward(tape, x_sigma);
  h = ops::add(tape, h, ops::gather_rows(tape, dit.pos, pos_ids));
  Tensor s_emb = dit.sigma_proj.forward(tape, sigma_features(sigmas, cfg.sigma_features));
  h = ops::segment_add(tape, h, s_emb, lat);

  for (const DitBlock& b : dit.blocks) {
    Tensor u = ops::layer_norm(tape, h, b.ln1_g, b.ln1_b);
    Tensor a = ops::attention(tape, b.q.forward(tape, u), b.k.forward(tape, u), b.v.forward(tape, u), lat, lat,
                              false);
    h = ops::add(tape, h, b.o.forward(tape, a));
    u = ops::layer_norm(tape, h, b.ln2_g, b.ln2_b);
    Tensor c = ops::attention(tape, b.cq.forward(tape, u), b.ck.forward(tape, cond.E), b.cv.forward(tape, cond.E),
                              lat, cond.segs, false);
    h = ops::add(tape, h, b.co.forward(tape, c));
    u = ops::layer_norm(tape, h, b.ln3_g, b.ln3_b);
    h = ops::add(tape, h, b.fc2.forward(tape, ops::gelu(tape, b.fc1.forward(tape, u))));
  }
  Tensor v = dit.out.forward(tape, ops::layer_norm(tape, h, dit.lnf_g, dit.lnf_b));
  if (cfg.sigma_data == 0.0) return v;
  Tensor c = Tensor::zeros({batch, cfg.latent_dim});
  auto cd = c.mutable_data();
  for (std::size_t i = 0; i < batch; ++i) {
    const double k = skip_coefficient(sigmas[i], cfg.sigma_data);
    for (std::size_t j = 0; j < cfg.latent_dim; ++j) cd[i * cfg.latent_dim + j] = k;
  }
  return ops::add(tape, v, ops::segment_scale(tape, x_sigma, c, lat));
}

}  // namespace mobo::backbones
