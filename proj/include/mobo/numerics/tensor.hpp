// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mobo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major double tensor with an optional gradient buffer.
///
/// A Tensor is a cheap handle: copies alias the same storage. Values are
/// treated as immutable once an op has produced them; only parameters are
/// rewritten in place (initializers, optimizers, finite-difference probes)
/// through `mutable_data()`.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // leading dim of a rank-2 tensor
  std::size_t cols() const;  // trailing dim of a rank-2 tensor

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Grad buffer, allocated (zero-filled) on first access. Gradients are
  /// mutable through any handle, including const ones.
  std::span<double> grad_buffer() const;
  void zero_grad() const;
  void drop_grad() const;

  /// Deep copy without gradient or tape linkage.
  Tensor clone() const;
  /// Copy with a different shape of equal numel; no grad link.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

/// Rows of a stacked batch that belong to each sequence. Sequences are laid
/// out back to back, so offsets are prefix sums of lengths.
struct Segments {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;

  static Segments single(std::size_t length);
  static Segments uniform(std::size_t count, std::size_t length);
  static Segments from_lengths(const std::vector<std::size_t>& lengths);

  std::size_t count() const { return lengths.size(); }
  std::size_t total() const;
  bool operator==(const Segments&) const = default;
};

}  // namespace mobo
