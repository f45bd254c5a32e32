// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cczsl/numcore/tensor.hpp"

// Differentiable primitives. Every function records itself on the active
// tape when at least one input requires a gradient, validates shapes
// (DimensionError names both operands) and rejects non-finite results
// (NumericError). Vectors are rank-1 tensors; matrices are rank-2.
namespace cczsl::numcore {

// x[n×p]·W[p×q] + b[q]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
// a[n×p]·b[p×q]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[n×d]·b[k×d]ᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[n×q] + r[q] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& r);
Tensor scale(const Tensor& x, double c);
// s·x where s holds a single value; both receive gradients.
Tensor mul_scalar(const Tensor& x, const Tensor& s);

Tensor exp(const Tensor& x);
// Natural log; DomainError on non-positive input.
Tensor log(const Tensor& x);
// log(max(x, floor)); the gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& x, double floor);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column sums / means of a matrix: [n×q] -> [q].
Tensor sum_rows(const Tensor& x);
Tensor mean_rows(const Tensor& x);
// Mean over consecutive groups of `group` rows: [n·group×q] -> [n×q].
Tensor pool_groups(const Tensor& x, std::size_t group);

Tensor reshape(const Tensor& x, Shape shape);
// Stacks matrices (or vectors as single rows) vertically.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor gather_cols(const Tensor& x, std::span<const std::size_t> cols);
// Repeats the whole matrix `times` times vertically.
Tensor tile_rows(const Tensor& x, std::size_t times);
// out[i] = x[i, index[i]] for x[n×k].
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

// Unit-norm vector / rows. DegenerateVectorError on a zero-norm input.
Tensor l2_normalize(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x);

// softmax(z / tau) with max subtraction; DomainError when tau <= 0.
Tensor softmax_t(const Tensor& z, double tau);
Tensor softmax_rows(const Tensor& x, double tau);
Tensor log_softmax_rows(const Tensor& x, double tau);

// <u,v>/(|u||v|) as a one-element tensor. DegenerateVectorError on a
// zero-norm input.
Tensor cosine(const Tensor& u, const Tensor& v);

// Single-head scaled dot-product attention of one query set against `n`
// key/value groups of `group` rows each:
//   out[s·k + i] = softmax_l(q_i·k_{s,l} / sqrt(d)) · v_{s,·}
// q[k×d], keys/values[n·group×d] -> [n·k×d].
Tensor cross_attention(const Tensor& q, const Tensor& keys, const Tensor& values,
                       std::size_t group);
// out[s, i] = v[s] · e[s·k + i] for v[n×d], e[n·k×d] -> [n×k].
Tensor group_dot(const Tensor& v, const Tensor& e);

struct BatchStatistics {
  std::vector<double> mean;
  std::vector<double> unbiased_var;
};

// Batch normalisation over the rows of x[N×d] using the batch statistics.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps, BatchStatistics* stats);
// Batch normalisation with fixed statistics.
Tensor batch_norm_eval(const Tensor& x, std::span<const double> mean,
                       std::span<const double> var, const Tensor& gamma,
                       const Tensor& beta, double eps);

// Records the smallest |input| seen by the non-smooth primitives (relu, abs)
// while alive. Used to keep finite-difference fixtures away from kinks.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  double min_margin() const;

 private:
  KinkProbe* previous_;
  double margin_;

  friend void note_kink_margin(double);
};

void note_kink_margin(double distance);

}  // namespace cczsl::numcore
