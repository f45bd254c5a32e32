// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "cczsl/losses/losses.hpp"
#include "cczsl/model/model.hpp"

namespace cczsl::losses {

// FNV digest over every parameter, the running statistics and the label
// index of a model state.
std::uint64_t state_digest(const model::ModelState& state);

// Frozen copy of a model at the end of a session. The bank lookups serve as
// the label index maps (primitive or pair identity -> logit position).
class TeacherSnapshot {
 public:
  static TeacherSnapshot freeze(std::size_t session, const model::ModelState& state);

  std::size_t session() const { return session_; }
  const model::ModelState& state() const { return *state_; }
  std::uint64_t digest() const { return digest_; }

  // IntegrityError if any parameter changed since freeze().
  void verify() const;

  // Eval-mode logits on `batch`, with the overlap against `student`.
  TeacherLogits logits(std::span<const world::Sample> batch, const world::WorldLatents& latents,
                       const model::ModelOptions& options, const prompts::PromptBank& student) const;

 private:
  std::size_t session_ = 0;
  std::shared_ptr<model::ModelState> state_;
  std::uint64_t digest_ = 0;
};

}  // namespace cczsl::losses
