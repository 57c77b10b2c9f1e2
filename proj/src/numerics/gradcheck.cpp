// SPDX-License-Identifier: Apache-2.0
#include "mobo/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mobo {

GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs, const GradCheckOptions& opts) {
  std::vector<bool> saved_flags;
  for (auto& x : inputs) {
    saved_flags.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.drop_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
    for (auto& x : inputs) {
      if (x.has_grad()) {
        analytic.emplace_back(x.grad().begin(), x.grad().end());
      } else {
        analytic.emplace_back(x.numel(), 0.0);
      }
      x.drop_grad();
    }
  }

  auto eval = [&]() {
    Tape tape(false);
    return f(tape).item();
  };

  GradCheckReport rep;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto data = inputs[t].mutable_data();
    const std::size_t n = data.size();
    std::size_t stride = 1;
    if (opts.max_elements_per_tensor > 0 && n > opts.max_elements_per_tensor) {
      stride = (n + opts.max_elements_per_tensor - 1) / opts.max_elements_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      data[i] = orig + opts.step;
      const double fp = eval();
      data[i] = orig - opts.step;
      const double fm = eval();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = analytic[t][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel = denom > 0 ? abs_err / denom : 0.0;
      ++rep.checked;
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      const bool ok = abs_err <= opts.abs_tol || rel <= opts.rel_tol;
      if (!ok) ++rep.failures;
      // Only elements that rely on the relative criterion count toward the
      // reported worst relative error.
      if (abs_err > opts.abs_tol && rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = std::to_string(t) + "[" + std::to_string(i) + "]";
      }
    }
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) inputs[t].set_requires_grad(saved_flags[t]);
  return rep;
}

}  // namespace mobo
