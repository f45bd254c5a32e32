// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/numcore/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cczsl/common/errors.hpp"

namespace cczsl::numcore {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : storage_(std::make_shared<TensorStorage>()) {
  storage_->shape = {1};
  storage_->value.assign(1, 0.0);
}

Tensor::Tensor(std::shared_ptr<TensorStorage> storage) : storage_(std::move(storage)) {}

Tensor Tensor::wrap(std::shared_ptr<TensorStorage> storage) { return Tensor(std::move(storage)); }

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a zero extent");
  }
  if (element_count(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor initialised with a non-finite value");
  }
  auto storage = std::make_shared<TensorStorage>();
  storage->shape = std::move(shape);
  storage->value = std::move(values);
  return Tensor(std::move(storage));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return from({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return matrix(n, n, std::move(v));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

std::size_t Tensor::rows() const {
  const auto& s = storage_->shape;
  if (s.size() == 2) return s[0];
  if (s.size() == 1) return 1;
  throw RankError("rows() on a tensor of shape " + shape_string(s));
}

std::size_t Tensor::cols() const {
  const auto& s = storage_->shape;
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  throw RankError("cols() on a tensor of shape " + shape_string(s));
}

double Tensor::item() const {
  if (size() != 1) throw RankError("item() on a tensor of shape " + shape_string(shape()));
  return storage_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return storage_->value[r * cols() + c]; }

void Tensor::set_requires_grad(bool on) {
  storage_->requires_grad = on;
  if (on && storage_->grad.size() != storage_->value.size()) {
    storage_->grad.assign(storage_->value.size(), 0.0);
  }
  if (!on) storage_->grad.clear();
}

void Tensor::zero_grad() {
  if (!storage_->grad.empty()) std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto storage = std::make_shared<TensorStorage>();
  storage->shape = storage_->shape;
  storage->value = storage_->value;
  Tensor t(std::move(storage));
  if (storage_->requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::detached() const {
  auto storage = std::make_shared<TensorStorage>();
  storage->shape = storage_->shape;
  storage->value = storage_->value;
  return Tensor(std::move(storage));
}

}  // namespace cczsl::numcore
