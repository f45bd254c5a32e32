// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cczsl/eval/metrics.hpp"
#include "cczsl/losses/losses.hpp"
#include "cczsl/model/model.hpp"

namespace cczsl::continual {

enum class OptimizerKind { Sgd, Adam };
std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Everything one multi-session run needs besides the splits. Defaults are
// sized for a single CPU core.
struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 20240601;
  OptimizerConfig optimizer;
  losses::LossWeights loss;
  std::size_t samples_per_seen = 50;  // training images per seen composition
  std::size_t test_samples = 10;      // test images per seen or unseen composition
  std::size_t d = 64;
  std::size_t L = 8;
  std::size_t m = 4;
  double sigma = 0.1;
  double dropout = 0.1;
  model::ModelOptions model;
  std::size_t max_teachers = 0;  // 0 keeps every earlier teacher
  eval::InferenceWeights inference;

  // ConfigError naming the first invalid field.
  void validate() const;
  std::uint64_t world_seed() const;
};

}  // namespace cczsl::continual
