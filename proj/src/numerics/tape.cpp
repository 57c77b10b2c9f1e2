// SPDX-License-Identifier: Apache-2.0
#include "mobo/numerics/tape.hpp"

#include "mobo/errors.hpp"

namespace mobo {

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss");
  }
  if (!recording_) throw ContractError("backward on a non-recording tape");
  if (!loss.requires_grad()) return;
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace mobo
