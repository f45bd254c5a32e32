// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cczsl/continual/config.hpp"
#include "cczsl/losses/teacher.hpp"
#include "cczsl/model/model.hpp"
#include "cczsl/world/latents.hpp"
#include "cczsl/world/space.hpp"

namespace cczsl::continual {

// samples_per_seen rendered images of every seen composition of a session,
// in composition order.
std::vector<world::Sample> training_samples(const world::WorldLatents& latents, const world::SessionSpec& session,
                                            const TrainConfig& config);

// test_samples images of every seen and unseen composition of a session.
// Validation pairs are not rendered.
std::vector<world::Sample> test_samples(const world::WorldLatents& latents, const world::SessionSpec& session,
                                        const TrainConfig& config);

// Frozen end-of-session models, oldest first. Every access re-checks the
// snapshot digests.
class TeacherRegistry {
 public:
  void add(losses::TeacherSnapshot teacher);
  std::size_t size() const { return teachers_.size(); }
  bool empty() const { return teachers_.empty(); }
  const losses::TeacherSnapshot& at(std::size_t i) const;
  const losses::TeacherSnapshot& latest() const;
  // The last `max_teachers` snapshots (all when 0), oldest first.
  std::vector<const losses::TeacherSnapshot*> active(std::size_t max_teachers) const;
  void verify_all() const;

 private:
  std::vector<losses::TeacherSnapshot> teachers_;
};

struct SessionResult {
  model::ModelState state;
  losses::TeacherSnapshot teacher;
  std::vector<double> epoch_loss;  // mean training objective per epoch
};

// Trains session `session.index`, which must equal registry.size(). Session
// 0 starts from fresh parameters and minimises the cross-entropy alone;
// later sessions copy the latest teacher, expand the bank and minimise the
// weighted total against every active teacher. The caller registers the
// returned snapshot. ConstraintViolation (before anything is built) when
// the session breaks the split rules or repeats a known composition.
SessionResult train_session(const world::CompositionSpace& space, const world::SessionSpec& session,
                            std::span<const world::Sample> data, const world::WorldLatents& latents,
                            const TeacherRegistry& registry, const TrainConfig& config);

}  // namespace cczsl::continual
