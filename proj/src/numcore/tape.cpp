// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/numcore/tape.hpp"

#include <algorithm>

#include "cczsl/common/errors.hpp"

namespace cczsl::numcore {
namespace {
thread_local Tape* t_active = nullptr;
}  // namespace

Tape* Tape::active() { return t_active; }

TapeScope::TapeScope(Tape& tape) : previous_(t_active) { t_active = &tape; }
TapeScope::~TapeScope() { t_active = previous_; }

NoGradScope::NoGradScope() : previous_(t_active) { t_active = nullptr; }
NoGradScope::~NoGradScope() { t_active = previous_; }

void backward(const Tensor& root, Tape& tape) {
  if (root.size() != 1) {
    throw RankError("backward needs a scalar root, got shape " + shape_string(root.shape()));
  }
  auto& nodes = tape.nodes_;
  std::size_t last = nodes.size();
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (nodes[i].output.get() == root.id()) {
      last = i;
      break;
    }
  }
  if (last == nodes.size()) throw GraphError("backward root was not produced on this tape");

  for (std::size_t i = 0; i <= last; ++i) {
    auto& out = *nodes[i].output;
    out.grad.assign(out.value.size(), 0.0);
    for (auto& in : nodes[i].inputs) {
      if (in->requires_grad && in->grad.size() != in->value.size()) {
        in->grad.assign(in->value.size(), 0.0);
      }
    }
  }
  nodes[last].output->grad[0] = 1.0;
  for (std::size_t i = last + 1; i-- > 0;) nodes[i].backprop();
}

}  // namespace cczsl::numcore
