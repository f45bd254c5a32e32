// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cczsl/continual/config.hpp"
#include "cczsl/eval/metrics.hpp"
#include "cczsl/model/model.hpp"
#include "cczsl/world/latents.hpp"
#include "cczsl/world/space.hpp"

namespace cczsl::continual {

// Candidates of a model: every composition in its bank, flagged seen when a
// session up to `upto` trains on it.
eval::CandidateSet candidate_set(const model::ModelState& state, std::span<const world::SessionSpec> sessions,
                                 std::size_t upto);

// Scores samples against every candidate with the inference weights.
// Sample ids are (session << 32) | position.
std::vector<eval::PredictionRecord> predict(model::ModelState& state, std::span<const world::Sample> samples,
                                            std::size_t session, const world::WorldLatents& latents,
                                            const TrainConfig& config,
                                            std::shared_ptr<const eval::CandidateSet> candidates);

// Reports of the session-t model.
struct SessionEvaluation {
  std::size_t session = 0;
  eval::MetricsReport czs;                  // accumulated test sets 0..t
  eval::MetricsReport zs;                   // session t test set
  std::vector<eval::MetricsReport> slices;  // one per session i <= t
  eval::BiasSweepCurve czs_curve;
  std::vector<std::vector<eval::PredictionRecord>> records;  // per slice
};

// Evaluates `state` as the model of session `t` on the test sets of
// sessions 0..t (test_sets[i] belongs to sessions[i]).
SessionEvaluation evaluate_session(model::ModelState& state, std::span<const world::SessionSpec> sessions,
                                   std::span<const std::vector<world::Sample>> test_sets, std::size_t t,
                                   const world::WorldLatents& latents, const TrainConfig& config);

struct SessionOutcome {
  SessionEvaluation evaluation;
  model::ModelState state;  // frozen end-of-session parameters
  std::vector<double> epoch_loss;
};

struct ProtocolResult {
  std::vector<SessionOutcome> sessions;
  eval::ForgettingMatrix forgetting;
  std::uint64_t splits_digest = 0;
};

// Called after each session is trained and evaluated.
using SessionHook = std::function<void(const SessionOutcome&)>;

// Trains and evaluates every session in order. ValidationError when the
// splits fail validate_splits.
ProtocolResult run_protocol(const TrainConfig& config, const world::CompositionSpace& space,
                            std::span<const world::SessionSpec> sessions, const SessionHook& hook = {});

// World of a run: one direction per primitive of the space.
world::WorldLatents run_world(const TrainConfig& config, const world::CompositionSpace& space);

}  // namespace cczsl::continual
