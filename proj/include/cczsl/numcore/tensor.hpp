// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cczsl::numcore {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
};

// Dense row-major array of doubles with an optional gradient buffer.
//
// Tensor is a cheap handle: copies alias the same storage, which is what the
// tape relies on to route gradients back to parameters. Use clone() for an
// independent deep copy.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor identity(std::size_t n);

  // Marks a leaf as a trainable parameter and allocates a zeroed gradient.
  static Tensor parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t size() const { return storage_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return size() == 1; }

  std::span<const double> values() const { return storage_->value; }
  // Direct write access; only meaningful on leaves (optimizer updates,
  // finite-difference perturbations).
  std::span<double> mutable_values() { return storage_->value; }

  double item() const;
  double operator[](std::size_t i) const { return storage_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return storage_->leaf; }

  // Gradient accumulated by backward(). Zeros when the tensor was never
  // reached; empty only for tensors that do not require grad.
  std::span<const double> grad() const { return storage_->grad; }
  void zero_grad();

  // Independent leaf with the same values (and requires_grad flag).
  Tensor clone() const;
  // Independent constant leaf with the same values.
  Tensor detached() const;

  const TensorStorage* id() const { return storage_.get(); }
  const std::shared_ptr<TensorStorage>& storage() const { return storage_; }

  static Tensor wrap(std::shared_ptr<TensorStorage> storage);

 private:
  explicit Tensor(std::shared_ptr<TensorStorage> storage);

  std::shared_ptr<TensorStorage> storage_;
};

}  // namespace cczsl::numcore
