// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cczsl/common/errors.hpp"
#include "cczsl/numcore/tape.hpp"

namespace cczsl::numcore {

std::vector<std::vector<double>> analytic_grad(const ScalarFn& f, std::vector<Tensor> params) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor root = f();
    if (!root.requires_grad()) {
      // Constant with respect to every parameter.
      std::vector<std::vector<double>> zeros;
      for (const Tensor& p : params) zeros.emplace_back(p.size(), 0.0);
      return zeros;
    }
    backward(root, tape);
  }
  std::vector<std::vector<double>> grads;
  for (const Tensor& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
  return grads;
}

double grad_check(const ScalarFn& f, std::vector<Tensor> params, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw DomainError("grad_check step must lie in [1e-7, 1e-3], got " + std::to_string(h));
  }
  const auto grads = analytic_grad(f, params);
  auto eval = [&f]() {
    NoGradScope off;
    const double v = f().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return v;
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = eval();
      values[i] = saved - h;
      const double down = eval();
      values[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double a = grads[k][i];
      worst = std::max(worst, std::fabs(a - fd) / std::max(1.0, std::fabs(a)));
    }
  }
  return worst;
}

}  // namespace cczsl::numcore
