// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "cczsl/numcore/tensor.hpp"

namespace cczsl::numcore {

using ScalarFn = std::function<Tensor()>;

// Compares the reverse-mode gradient of f with respect to every coordinate of
// `params` against a central finite difference with step h. Returns
//   max_i |analytic_i - fd_i| / max(1, |analytic_i|).
// f must rebuild its graph from the current parameter values on every call.
// Parameter values are restored before returning. Gradients already
// accumulated in the parameters are discarded.
double grad_check(const ScalarFn& f, std::vector<Tensor> params, double h = 1e-5);

// Analytic gradients of f, one vector per parameter.
std::vector<std::vector<double>> analytic_grad(const ScalarFn& f, std::vector<Tensor> params);

}  // namespace cczsl::numcore
