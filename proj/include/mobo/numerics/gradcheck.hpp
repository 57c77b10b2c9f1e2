// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mobo/numerics/tape.hpp"
#include "mobo/numerics/tensor.hpp"

namespace mobo {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  // Elements whose reverse-mode and numeric gradients differ by at most this
  // much pass regardless of relative error (true-zero gradients).
  double abs_tol = 1e-7;
  // 0 = probe every element; otherwise an evenly strided subset per tensor.
  std::size_t max_elements_per_tensor = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string worst;  // "<tensor index>[<element>]" of the worst relative error
  bool passed() const { return failures == 0; }
};

/// Scalar function of whatever tensors it closes over; it must build its
/// graph on the given tape.
using ScalarFn = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients of `f` w.r.t. each tensor in `inputs`
/// against central finite differences. Inputs are perturbed in place and
/// restored; their requires_grad flag is forced on for the analytic pass
/// and restored afterwards.
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs, const GradCheckOptions& opts = {});

inline GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                                  double step, double tol) {
  GradCheckOptions opts;
  opts.step = step;
  opts.rel_tol = tol;
  return grad_check([&](Tape& t) { return f(t, x); }, {x}, opts);
}

}  // namespace mobo
