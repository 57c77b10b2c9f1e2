// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mobo/numerics/tape.hpp"
#include "mobo/numerics/tensor.hpp"

/// Differentiable primitives. Every op takes the tape it records onto; the
/// output requires grad iff the tape is recording and some input does.
/// Matrices are rank-2 [rows x cols]; sequences are stacked along rows and
/// described by `Segments` where an op needs to know sequence boundaries.
namespace mobo::ops {

inline constexpr double kLayerNormEps = 1e-5;

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// x W + b, with b optional (undefined tensor means no bias).
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
/// x[r, :] + v for every row r.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& v);

Tensor gelu(Tape& tape, const Tensor& x);  // tanh approximation
Tensor sigmoid(Tape& tape, const Tensor& x);

/// Per-row normalization with population variance, then gain * xhat + bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

/// exp(w / tau) / sum exp(w / tau), max-subtracted.
Tensor softmax_temperature(Tape& tape, const Tensor& w, double tau);

/// sum_l alpha[l] * xs[l]; all xs share one shape, alpha has xs.size() entries.
Tensor weighted_sum(Tape& tape, std::span<const Tensor> xs, const Tensor& alpha);

/// Per-channel 1D convolution along rows with zero "same" padding inside
/// each segment. kernels is [D x k] with k odd.
Tensor conv1d_depthwise(Tape& tape, const Tensor& x, const Tensor& kernels, const Segments& segs);
/// Per-token channel mixing x W + b.
Tensor conv1d_pointwise(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

/// [segments x D] mean over each segment's rows.
Tensor segment_mean(Tape& tape, const Tensor& x, const Segments& segs);
/// x[r, :] * g[seg(r), :].
Tensor segment_scale(Tape& tape, const Tensor& x, const Tensor& g, const Segments& segs);
/// x[r, :] + v[seg(r), :].
Tensor segment_add(Tape& tape, const Tensor& x, const Tensor& v, const Segments& segs);

/// Single-head scaled dot-product attention. Query segment i attends to key
/// segment i. `causal` requires matching segment lengths and masks keys
/// after the query position.
Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                 const Segments& q_segs, const Segments& k_segs, bool causal);

/// Rows of `table` selected by ids (embedding lookup / row gather).
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);

/// Mean over masked-in rows of -log softmax(logits)[target].
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> targets,
                     std::span<const std::uint8_t> mask);
/// sum_r w[r] * sum_c (pred - target)^2 / numel. target carries no gradient.
Tensor weighted_mse(Tape& tape, const Tensor& pred, const Tensor& target,
                    std::span<const double> row_weights);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

}  // namespace mobo::ops

namespace mobo::kernels {

/// c[M x P] += a[M x K] * b[K x P], all row-major and contiguous.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t p);
std::vector<double> transpose(std::span<const double> x, std::size_t rows, std::size_t cols);

}  // namespace mobo::kernels
