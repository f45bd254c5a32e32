// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/continual/optimizer.hpp"

#include <cmath>

#include "cczsl/common/errors.hpp"

namespace cczsl::continual {

Optimizer::Optimizer(const OptimizerConfig& config, double lr, std::vector<numcore::Tensor> params)
    : config_(config), lr_(lr), params_(std::move(params)) {
  for (auto& p : params_) {
    if (!p.requires_grad()) throw ConfigError("optimizer given a tensor that does not take gradients");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (const auto& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient; optimizer step skipped");
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto x = params_[k].mutable_values();
    auto g = params_[k].grad();
    if (config_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr_ * g[i];
      continue;
    }
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

}  // namespace cczsl::continual
