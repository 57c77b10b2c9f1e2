// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mobo/numerics/tensor.hpp"

namespace mobo {

/// Execution record for reverse-mode differentiation.
///
/// Ops append a backward closure when at least one input requires a
/// gradient. Closures are stored in execution order, so replaying them in
/// reverse is a valid topological traversal. A non-recording tape runs
/// forwards only; its outputs never require grad.
///
/// A tape is single-threaded. Separate tapes may run on separate threads as
/// long as they do not share trainable tensors.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }

  /// Multiply-accumulate FLOPs (2 per MAC) of the dense ops executed so far.
  std::uint64_t flops() const { return flops_; }
  void add_flops(std::uint64_t n) { flops_ += n; }

  /// Seeds d(loss)/d(loss) = 1 and replays the record in reverse. Gradients
  /// accumulate into existing buffers; callers zero them between steps.
  void backward(const Tensor& loss);

 private:
  bool recording_;
  std::uint64_t flops_ = 0;
  std::vector<std::function<void()>> ops_;
};

inline void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace mobo
