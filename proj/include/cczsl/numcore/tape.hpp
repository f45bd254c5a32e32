// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cczsl/numcore/tensor.hpp"

namespace cczsl::numcore {

// Reverse-mode recording of primitive operations.
//
// Operations append to the tape that is active on the calling thread (see
// TapeScope) whenever one of their inputs requires a gradient. Nodes are
// appended in execution order, so the list is already topologically sorted.
class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<TensorStorage>> inputs;
    std::shared_ptr<TensorStorage> output;
    std::function<void()> backprop;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  // Tape active on this thread, or nullptr.
  static Tape* active();

 private:
  friend void backward(const Tensor& root, Tape& tape);
  friend class TapeScope;
  friend class NoGradScope;

  std::vector<Node> nodes_;
};

// Makes `tape` the active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording for the lifetime of the scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Accumulates d(root)/d(leaf) into the grad buffer of every leaf that
// requires a gradient and was reached from root. Leaf gradients add up across
// calls until zero_grad(); intermediate gradients are reset on every call.
void backward(const Tensor& root, Tape& tape);

}  // namespace cczsl::numcore
