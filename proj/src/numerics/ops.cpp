// SPDX-License-Identifier: Apache-2.0
#include "mobo/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mobo/errors.hpp"

namespace mobo::kernels {

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t p) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + i * p;
    double* c1 = c0 + p;
    double* c2 = c1 + p;
    double* c3 = c2 + p;
    const double* a0 = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * p;
      const double x0 = a0[kk];
      const double x1 = a0[k + kk];
      const double x2 = a0[2 * k + kk];
      const double x3 = a0[3 * k + kk];
      for (std::size_t j = 0; j < p; ++j) {
        const double bv = brow[j];
        c0[j] += x0 * bv;
        c1[j] += x1 * bv;
        c2[j] += x2 * bv;
        c3[j] += x3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * p;
    const double* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * p;
      const double x = arow[kk];
      for (std::size_t j = 0; j < p; ++j) crow[j] += x * brow[j];
    }
  }
}

std::vector<double> transpose(std::span<const double> x, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = x[r * cols + c];
  return t;
}

}  // namespace mobo::kernels

namespace mobo::ops {
namespace {

using kernels::gemm_acc;
using kernels::transpose;

bool tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

Tensor make_out(Shape shape, std::vector<double> values, bool grad) {
  return Tensor::from(std::move(shape), std::move(values), grad);
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " must be rank-2, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_segments(const Segments& segs, std::size_t rows, const char* op) {
  if (segs.total() != rows) {
    throw DimensionError(std::string(op) + ": segments cover " + std::to_string(segs.total()) +
                         " rows but tensor has " + std::to_string(rows));
  }
}

// Row index -> segment index.
std::vector<std::size_t> row_owner(const Segments& segs) {
  std::vector<std::size_t> owner(segs.total());
  for (std::size_t s = 0; s < segs.count(); ++s)
    for (std::size_t r = 0; r < segs.lengths[s]; ++r) owner[segs.offsets[s] + r] = s;
  return owner;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, p);
  tape.add_flops(2ull * m * k * p);
  const bool grad = tracks(tape, {&a, &b});
  Tensor y = make_out({m, p}, std::move(out), grad);
  if (grad) {
    tape.record([a, b, y, m, k, p]() mutable {
      if (!y.has_grad()) return;
      const double* dy = y.grad().data();
      if (a.requires_grad()) {
        auto bt = transpose(b.data(), k, p);
        gemm_acc(dy, bt.data(), a.grad_buffer().data(), m, p, k);
      }
      if (b.requires_grad()) {
        auto at = transpose(a.data(), m, k);
        gemm_acc(at.data(), dy, b.grad_buffer().data(), k, m, p);
      }
    });
  }
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(tape, x, weight);
  return bias.defined() ? add_row(tape, y, bias) : y;
}

namespace {

template <class Fwd, class Bwd>
Tensor binary_elementwise(Tape& tape, const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i]);
  const bool grad = tracks(tape, {&a, &b});
  Tensor y = make_out(a.shape(), std::move(out), grad);
  if (grad) {
    tape.record([a, b, y, n, bwd]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto ad = a.data();
      auto bd = b.data();
      std::span<double> ga, gb;
      if (a.requires_grad()) ga = a.grad_buffer();
      if (b.requires_grad()) gb = b.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        double da = 0.0, db = 0.0;
        bwd(ad[i], bd[i], dy[i], da, db);
        if (!ga.empty()) ga[i] += da;
        if (!gb.empty()) gb[i] += db;
      }
    });
  }
  return y;
}

template <class Fwd, class Deriv>
Tensor unary_elementwise(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xd[i]);
  const bool grad = tracks(tape, {&x});
  Tensor y = make_out(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record([x, y, n, deriv]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xd = x.data();
      auto yd = y.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[i] += dy[i] * deriv(xd[i], yd[i]);
    });
  }
  return y;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  return unary_elementwise(
      tape, a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& v) {
  require_rank2(x, "add_row input");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (v.numel() != cols) {
    throw DimensionError("add_row: bias " + shape_str(v.shape()) + " vs input " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto vd = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += vd[c];
  const bool grad = tracks(tape, {&x, &v});
  Tensor y = make_out(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record([x, v, y, rows, cols]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[i];
      }
      if (v.requires_grad()) {
        auto gv = v.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gv[c] += dy[r * cols + c];
      }
    });
  }
  return y;
}

Tensor gelu(Tape& tape, const Tensor& x) {
  static const double kC = std::sqrt(2.0 / std::numbers::pi);
  return unary_elementwise(
      tape, x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + 0.044715 * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kC * (v + 0.044715 * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * 0.044715 * v * v);
      });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm input");
  const std::size_t rows = x.rows(), d = x.cols();
  if (d < 2) throw DimensionError("layer_norm: degenerate feature dimension " + std::to_string(d));
  if (!(eps > 0)) throw DomainError("layer_norm: eps must be positive");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: affine params " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " vs width " + std::to_string(d));
  }
  std::vector<double> xhat(rows * d), inv_std(rows), out(rows * d);
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mu) * is;
      xhat[r * d + c] = h;
      out[r * d + c] = gd[c] * h + bd[c];
    }
  }
  const bool grad = tracks(tape, {&x, &gain, &bias});
  Tensor y = make_out(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record([x, gain, bias, y, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto gd = gain.data();
      if (gain.requires_grad()) {
        auto gg = gain.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < d; ++c) gg[c] += dy[r * d + c] * xhat[r * d + c];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < d; ++c) gb[c] += dy[r * d + c];
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_g = 0.0, mean_gh = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double g = dy[r * d + c] * gd[c];
            mean_g += g;
            mean_gh += g * xhat[r * d + c];
          }
          mean_g *= inv_d;
          mean_gh *= inv_d;
          for (std::size_t c = 0; c < d; ++c) {
            const double g = dy[r * d + c] * gd[c];
            gx[r * d + c] += inv_std[r] * (g - mean_g - xhat[r * d + c] * mean_gh);
          }
        }
      }
    });
  }
  return y;
}

Tensor softmax_temperature(Tape& tape, const Tensor& w, double tau) {
  if (!(tau > 0)) throw DomainError("softmax_temperature: tau must be positive, got " + std::to_string(tau));
  const std::size_t k = w.numel();
  if (k == 0) throw DimensionError("softmax_temperature: empty weight vector");
  auto wd = w.data();
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : wd) mx = std::max(mx, v / tau);
  std::vector<double> out(k);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(wd[i] / tau - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  const bool grad = tracks(tape, {&w});
  Tensor y = make_out({k}, std::move(out), grad);
  if (grad) {
    tape.record([w, y, k, tau]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto a = y.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < k; ++i) dot += a[i] * dy[i];
      auto gw = w.grad_buffer();
      for (std::size_t i = 0; i < k; ++i) gw[i] += a[i] * (dy[i] - dot) / tau;
    });
  }
  return y;
}

Tensor weighted_sum(Tape& tape, std::span<const Tensor> xs, const Tensor& alpha) {
  if (xs.empty()) throw DimensionError("weighted_sum: no inputs");
  if (alpha.numel() != xs.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(xs.size()) + " inputs but " +
                         std::to_string(alpha.numel()) + " weights");
  }
  for (const auto& x : xs) require_same_shape(xs.front(), x, "weighted_sum");
  const std::size_t n = xs.front().numel();
  auto ad = alpha.data();
  std::vector<double> out(n);
  {
    auto x0 = xs[0].data();
    for (std::size_t i = 0; i < n; ++i) out[i] = ad[0] * x0[i];
  }
  for (std::size_t l = 1; l < xs.size(); ++l) {
    auto xl = xs[l].data();
    for (std::size_t i = 0; i < n; ++i) out[i] += ad[l] * xl[i];
  }
  bool grad = tracks(tape, {&alpha});
  for (const auto& x : xs) grad = grad || tracks(tape, {&x});
  Tensor y = make_out(xs.front().shape(), std::move(out), grad);
  if (grad) {
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    tape.record([inputs, alpha, y, n]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto ad = alpha.data();
      std::span<double> ga;
      if (alpha.requires_grad()) ga = alpha.grad_buffer();
      for (std::size_t l = 0; l < inputs.size(); ++l) {
        Tensor& x = inputs[l];
        if (x.requires_grad()) {
          auto gx = x.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) gx[i] += ad[l] * dy[i];
        }
        if (!ga.empty()) {
          auto xd = x.data();
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += xd[i] * dy[i];
          ga[l] += s;
        }
      }
    });
  }
  return y;
}

Tensor conv1d_depthwise(Tape& tape, const Tensor& x, const Tensor& kernels, const Segments& segs) {
  require_rank2(x, "conv1d_depthwise input");
  require_rank2(kernels, "conv1d_depthwise kernels");
  const std::size_t rows = x.rows(), d = x.cols(), k = kernels.cols();
  if (k % 2 == 0) throw ConfigError("conv1d_depthwise: kernel width must be odd, got " + std::to_string(k));
  if (kernels.rows() != d) {
    throw DimensionError("conv1d_depthwise: kernels " + shape_str(kernels.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  require_segments(segs, rows, "conv1d_depthwise");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  auto kt = transpose(kernels.data(), d, k);  // [k x d]
  auto xd = x.data();
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t s = 0; s < segs.count(); ++s) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(segs.offsets[s]);
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(segs.lengths[s]);
    for (std::ptrdiff_t n = 0; n < len; ++n) {
      double* yrow = out.data() + (off + n) * d;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = n + static_cast<std::ptrdiff_t>(j) - half;
        if (src < 0 || src >= len) continue;
        const double* xrow = xd.data() + (off + src) * d;
        const double* krow = kt.data() + j * d;
        for (std::size_t c = 0; c < d; ++c) yrow[c] += krow[c] * xrow[c];
      }
    }
  }
  tape.add_flops(2ull * rows * d * k);
  const bool grad = tracks(tape, {&x, &kernels});
  Tensor y = make_out(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record([x, kernels, y, segs, d, k, half, kt = std::move(kt)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xd = x.data();
      std::span<double> gx;
      if (x.requires_grad()) gx = x.grad_buffer();
      std::vector<double> gkt(kernels.requires_grad() ? k * d : 0, 0.0);
      for (std::size_t s = 0; s < segs.count(); ++s) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(segs.offsets[s]);
        const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(segs.lengths[s]);
        for (std::ptrdiff_t n = 0; n < len; ++n) {
          const double* dyrow = dy.data() + (off + n) * d;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = n + static_cast<std::ptrdiff_t>(j) - half;
            if (src < 0 || src >= len) continue;
            if (!gx.empty()) {
              double* gxrow = gx.data() + (off + src) * d;
              const double* krow = kt.data() + j * d;
              for (std::size_t c = 0; c < d; ++c) gxrow[c] += krow[c] * dyrow[c];
            }
            if (!gkt.empty()) {
              const double* xrow = xd.data() + (off + src) * d;
              double* grow = gkt.data() + j * d;
              for (std::size_t c = 0; c < d; ++c) grow[c] += xrow[c] * dyrow[c];
            }
          }
        }
      }
      if (!gkt.empty()) {
        auto gk = kernels.grad_buffer();
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t c = 0; c < d; ++c) gk[c * k + j] += gkt[j * d + c];
      }
    });
  }
  return y;
}

Tensor conv1d_pointwise(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank2(x, "conv1d_pointwise input");
  require_rank2(weight, "conv1d_pointwise weight");
  if (weight.rows() != x.cols() || (bias.defined() && bias.numel() != weight.cols())) {
    throw DimensionError("conv1d_pointwise: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + (bias.defined() ? ", bias " + shape_str(bias.shape()) : ""));
  }
  return linear(tape, x, weight, bias);
}

Tensor segment_mean(Tape& tape, const Tensor& x, const Segments& segs) {
  require_rank2(x, "segment_mean input");
  const std::size_t d = x.cols();
  require_segments(segs, x.rows(), "segment_mean");
  const std::size_t b = segs.count();
  std::vector<double> out(b * d, 0.0);
  auto xd = x.data();
  for (std::size_t s = 0; s < b; ++s) {
    if (segs.lengths[s] == 0) throw ContractError("segment_mean: empty segment");
    double* orow = out.data() + s * d;
    for (std::size_t r = 0; r < segs.lengths[s]; ++r) {
      const double* xrow = xd.data() + (segs.offsets[s] + r) * d;
      for (std::size_t c = 0; c < d; ++c) orow[c] += xrow[c];
    }
    const double inv = 1.0 / static_cast<double>(segs.lengths[s]);
    for (std::size_t c = 0; c < d; ++c) orow[c] *= inv;
  }
  const bool grad = tracks(tape, {&x});
  Tensor y = make_out({b, d}, std::move(out), grad);
  if (grad) {
    tape.record([x, y, segs, d]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t s = 0; s < segs.count(); ++s) {
        const double inv = 1.0 / static_cast<double>(segs.lengths[s]);
        for (std::size_t r = 0; r < segs.lengths[s]; ++r) {
          double* grow = gx.data() + (segs.offsets[s] + r) * d;
          for (std::size_t c = 0; c < d; ++c) grow[c] += dy[s * d + c] * inv;
        }
      }
    });
  }
  return y;
}

namespace {

void require_per_segment(const Tensor& x, const Tensor& g, const Segments& segs, const char* op) {
  require_rank2(x, op);
  require_rank2(g, op);
  require_segments(segs, x.rows(), op);
  if (g.rows() != segs.count() || g.cols() != x.cols()) {
    throw DimensionError(std::string(op) + ": per-segment operand " + shape_str(g.shape()) + " vs input " +
                         shape_str(x.shape()) + " with " + std::to_string(segs.count()) + " segments");
  }
}

}  // namespace

Tensor segment_scale(Tape& tape, const Tensor& x, const Tensor& g, const Segments& segs) {
  require_per_segment(x, g, segs, "segment_scale");
  const std::size_t d = x.cols();
  auto owner = row_owner(segs);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  auto gd = g.data();
  for (std::size_t r = 0; r < owner.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xd[r * d + c] * gd[owner[r] * d + c];
  const bool grad = tracks(tape, {&x, &g});
  Tensor y = make_out(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record([x, g, y, d, owner = std::move(owner)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xd = x.data();
      auto gd = g.data();
      std::span<double> gx, gg;
      if (x.requires_grad()) gx = x.grad_buffer();
      if (g.requires_grad()) gg = g.grad_buffer();
      for (std::size_t r = 0; r < owner.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          const double up = dy[r * d + c];
          if (!gx.empty()) gx[r * d + c] += up * gd[owner[r] * d + c];
          if (!gg.empty()) gg[owner[r] * d + c] += up * xd[r * d + c];
        }
      }
    });
  }
  return y;
}

Tensor segment_add(Tape& tape, const Tensor& x, const Tensor& v, const Segments& segs) {
  require_per_segment(x, v, segs, "segment_add");
  const std::size_t d = x.cols();
  auto owner = row_owner(segs);
  std::vector<double> out(x.data().begin(), x.data().end());
  auto vd = v.data();
  for (std::size_t r = 0; r < owner.size(); ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += vd[owner[r] * d + c];
  const bool grad = tracks(tape, {&x, &v});
  Tensor y = make_out(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record([x, v, y, d, owner = std::move(owner)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[i];
      }
      if (v.requires_grad()) {
        auto gv = v.grad_buffer();
        for (std::size_t r = 0; r < owner.size(); ++r)
          for (std::size_t c = 0; c < d; ++c) gv[owner[r] * d + c] += dy[r * d + c];
      }
    });
  }
  return y;
}

Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, const Segments& q_segs,
                 const Segments& k_segs, bool causal) {
  require_rank2(q, "attention query");
  require_rank2(k, "attention key");
  require_rank2(v, "attention value");
  const std::size_t dk = q.cols(), dv = v.cols();
  if (k.cols() != dk || k.rows() != v.rows()) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()));
  }
  require_segments(q_segs, q.rows(), "attention queries");
  require_segments(k_segs, k.rows(), "attention keys");
  if (q_segs.count() != k_segs.count()) throw DimensionError("attention: query/key segment counts differ");
  if (causal && q_segs.lengths != k_segs.lengths) {
    throw DimensionError("attention: causal mode needs equal query and key segment lengths");
  }
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  std::vector<double> out(q.rows() * dv, 0.0);
  // Softmax probabilities per segment, kept for the backward pass.
  std::vector<std::vector<double>> probs(q_segs.count());
  std::uint64_t flops = 0;
  for (std::size_t s = 0; s < q_segs.count(); ++s) {
    const std::size_t tq = q_segs.lengths[s], tk = k_segs.lengths[s];
    const double* qs = qd.data() + q_segs.offsets[s] * dk;
    const double* ks = kd.data() + k_segs.offsets[s] * dk;
    const double* vs = vd.data() + k_segs.offsets[s] * dv;
    auto kt = transpose(std::span<const double>(ks, tk * dk), tk, dk);
    std::vector<double>& p = probs[s];
    p.assign(tq * tk, 0.0);
    gemm_acc(qs, kt.data(), p.data(), tq, dk, tk);
    for (std::size_t i = 0; i < tq; ++i) {
      double* row = p.data() + i * tk;
      const std::size_t visible = causal ? i + 1 : tk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        row[j] *= sc;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (std::size_t j = 0; j < visible; ++j) row[j] /= z;
      for (std::size_t j = visible; j < tk; ++j) row[j] = 0.0;
    }
    gemm_acc(p.data(), vs, out.data() + q_segs.offsets[s] * dv, tq, tk, dv);
    flops += 2ull * tq * tk * (dk + dv);
  }
  tape.add_flops(flops);
  const bool grad = tracks(tape, {&q, &k, &v});
  Tensor y = make_out({q.rows(), dv}, std::move(out), grad);
  if (grad) {
    tape.record([q, k, v, y, q_segs, k_segs, dk, dv, sc, probs = std::move(probs)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto qd = q.data();
      auto kd = k.data();
      auto vd = v.data();
      std::span<double> gq, gk, gv;
      if (q.requires_grad()) gq = q.grad_buffer();
      if (k.requires_grad()) gk = k.grad_buffer();
      if (v.requires_grad()) gv = v.grad_buffer();
      for (std::size_t s = 0; s < q_segs.count(); ++s) {
        const std::size_t tq = q_segs.lengths[s], tk = k_segs.lengths[s];
        const std::size_t qo = q_segs.offsets[s], ko = k_segs.offsets[s];
        const std::vector<double>& p = probs[s];
        const double* dys = dy.data() + qo * dv;
        if (!gv.empty()) {
          auto pt = transpose(p, tq, tk);
          gemm_acc(pt.data(), dys, gv.data() + ko * dv, tk, tq, dv);
        }
        if (gq.empty() && gk.empty()) continue;
        // dP = dY V^T, then dS = P * (dP - rowsum(dP * P)) * scale.
        auto vt = transpose(std::span<const double>(vd.data() + ko * dv, tk * dv), tk, dv);
        std::vector<double> ds(tq * tk, 0.0);
        gemm_acc(dys, vt.data(), ds.data(), tq, dv, tk);
        for (std::size_t i = 0; i < tq; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < tk; ++j) dot += ds[i * tk + j] * p[i * tk + j];
          for (std::size_t j = 0; j < tk; ++j) ds[i * tk + j] = p[i * tk + j] * (ds[i * tk + j] - dot) * sc;
        }
        if (!gq.empty()) gemm_acc(ds.data(), kd.data() + ko * dk, gq.data() + qo * dk, tq, tk, dk);
        if (!gk.empty()) {
          auto dst = transpose(ds, tq, tk);
          gemm_acc(dst.data(), qd.data() + qo * dk, gk.data() + ko * dk, tk, tq, dk);
        }
      }
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows table");
  const std::size_t n = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(n) +
                       " rows");
    }
    std::copy_n(td.data() + ids[i] * d, d, out.data() + i * d);
  }
  const bool grad = tracks(tape, {&table});
  Tensor y = make_out({ids.size(), d}, std::move(out), grad);
  if (grad) {
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    tape.record([table, y, d, idv = std::move(idv)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) gt[idv[i] * d + c] += dy[i * d + c];
    });
  }
  return y;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows part");
    if (p.cols() != d) throw DimensionError("concat_rows: width mismatch " + shape_str(p.shape()));
    rows += p.rows();
    grad = grad || tracks(tape, {&p});
  }
  std::vector<double> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y = make_out({rows, d}, std::move(out), grad);
  if (grad) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record([inputs, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      std::size_t off = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += dy[off + i];
        }
        off += p.numel();
      }
    });
  }
  return y;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows input");
  if (begin + count > x.rows()) {
    throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.data().begin() + begin * d, x.data().begin() + (begin + count) * d);
  const bool grad = tracks(tape, {&x});
  Tensor y = make_out({count, d}, std::move(out), grad);
  if (grad) {
    tape.record([x, y, begin, d]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) gx[begin * d + i] += dy[i];
    });
  }
  return y;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> targets,
                     std::span<const std::uint8_t> mask) {
  require_rank2(logits, "cross_entropy logits");
  const std::size_t t = logits.rows(), v = logits.cols();
  if (targets.size() != t || mask.size() != t) {
    throw DimensionError("cross_entropy: " + std::to_string(t) + " logit rows, " + std::to_string(targets.size()) +
                         " targets, " + std::to_string(mask.size()) + " mask entries");
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < t; ++i) {
    if (targets[i] >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " at position " + std::to_string(i) +
                       " outside vocabulary of " + std::to_string(v));
    }
    count += mask[i] ? 1 : 0;
  }
  if (count == 0) throw ContractError("cross_entropy: every position is masked out (empty loss)");
  auto ld = logits.data();
  std::vector<double> probs(t * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    const double* row = ld.data() + i * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(row[j] - mx);
      z += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += (mx + std::log(z)) - row[targets[i]];
  }
  const double inv = 1.0 / static_cast<double>(count);
  const bool grad = tracks(tape, {&logits});
  Tensor y = make_out({}, {total * inv}, grad);
  if (grad) {
    std::vector<std::size_t> tv(targets.begin(), targets.end());
    std::vector<std::uint8_t> mv(mask.begin(), mask.end());
    tape.record([logits, y, t, v, inv, probs = std::move(probs), tv = std::move(tv), mv = std::move(mv)]() mutable {
      if (!y.has_grad()) return;
      const double up = y.grad()[0] * inv;
      auto gl = logits.grad_buffer();
      for (std::size_t i = 0; i < t; ++i) {
        if (!mv[i]) continue;
        for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += up * probs[i * v + j];
        gl[i * v + tv[i]] -= up;
      }
    });
  }
  return y;
}

Tensor weighted_mse(Tape& tape, const Tensor& pred, const Tensor& target, std::span<const double> row_weights) {
  require_same_shape(pred, target, "weighted_mse");
  require_rank2(pred, "weighted_mse input");
  const std::size_t rows = pred.rows(), cols = pred.cols();
  if (row_weights.size() != rows) {
    throw DimensionError("weighted_mse: " + std::to_string(row_weights.size()) + " row weights for " +
                         std::to_string(rows) + " rows");
  }
  auto pd = pred.data();
  auto td = target.data();
  const double inv = 1.0 / static_cast<double>(pred.numel());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = pd[r * cols + c] - td[r * cols + c];
      s += e * e;
    }
    total += row_weights[r] * s;
  }
  const bool grad = tracks(tape, {&pred});
  Tensor y = make_out({}, {total * inv}, grad);
  if (grad) {
    std::vector<double> w(row_weights.begin(), row_weights.end());
    tape.record([pred, target, y, rows, cols, inv, w = std::move(w)]() mutable {
      if (!y.has_grad()) return;
      const double up = y.grad()[0];
      auto pd = pred.data();
      auto td = target.data();
      auto gp = pred.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          gp[r * cols + c] += up * 2.0 * w[r] * (pd[r * cols + c] - td[r * cols + c]) * inv;
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool grad = tracks(tape, {&x});
  Tensor y = make_out({}, {s}, grad);
  if (grad) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      const double up = y.grad()[0];
      for (double& g : x.grad_buffer()) g += up;
    });
  }
  return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace mobo::ops
