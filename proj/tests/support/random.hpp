// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cczsl/numcore/tensor.hpp"

namespace cczsl::testing {

// Hand-rolled generators for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  std::vector<double> normals(std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(sd);
    return v;
  }

  numcore::Tensor matrix(std::size_t r, std::size_t c, double sd = 1.0) {
    return numcore::Tensor::matrix(r, c, normals(r * c, sd));
  }
  numcore::Tensor vector(std::size_t n, double sd = 1.0) { return numcore::Tensor::vector(normals(n, sd)); }
  numcore::Tensor param(numcore::Shape shape, double sd = 1.0) {
    const std::size_t n = numcore::element_count(shape);
    return numcore::Tensor::parameter(std::move(shape), normals(n, sd));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace cczsl::testing
