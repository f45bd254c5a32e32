// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/continual/config.hpp"

#include <cmath>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"

namespace cczsl::continual {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer \"" + name + "\" (expected sgd or adam)");
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(epochs >= 1, "train.epochs must be at least 1");
  need(lr > 0.0 && std::isfinite(lr), "train.lr must be positive");
  need(batch_size >= 1, "train.batch_size must be at least 1");
  need(samples_per_seen >= 1, "train.samples_per_seen must be at least 1");
  need(test_samples >= 1, "train.test_samples must be at least 1");
  need(d >= 4, "world.d must be at least 4");
  need(L >= 2, "world.L must be at least 2");
  need(m >= 1, "world.m must be at least 1");
  need(sigma >= 0.0 && std::isfinite(sigma), "world.sigma must be non-negative");
  need(dropout >= 0.0 && dropout < 1.0, "train.dropout must lie in [0,1)");
  need(model.tau > 0.0 && std::isfinite(model.tau), "inference.tau must be positive");
  need(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "train.beta1 must lie in [0,1)");
  need(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "train.beta2 must lie in [0,1)");
  need(optimizer.eps > 0.0, "train.eps must be positive");
  loss.validate();
  inference.validate();
}

std::uint64_t TrainConfig::world_seed() const { return derive_seed(seed, "world"); }

}  // namespace cczsl::continual
