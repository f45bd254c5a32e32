// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cczsl/continual/config.hpp"
#include "cczsl/numcore/tensor.hpp"

namespace cczsl::continual {

// First-order update of a fixed parameter list from its accumulated
// gradients. Adam keeps per-parameter moments with bias correction.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, double lr, std::vector<numcore::Tensor> params);

  void zero_grad();
  // NumericError if a gradient is not finite; no parameter is changed then.
  void step();
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig config_;
  double lr_;
  std::vector<numcore::Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace cczsl::continual
