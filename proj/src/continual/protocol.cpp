// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/continual/protocol.hpp"

#include <algorithm>
#include <set>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/log.hpp"
#include "cczsl/continual/trainer.hpp"
#include "cczsl/numcore/tape.hpp"

namespace cczsl::continual {

eval::CandidateSet candidate_set(const model::ModelState& state, std::span<const world::SessionSpec> sessions,
                                 std::size_t upto) {
  std::set<world::Composition> seen;
  for (std::size_t s = 0; s <= upto && s < sessions.size(); ++s) seen.insert(sessions[s].seen.begin(), sessions[s].seen.end());
  std::vector<bool> flags;
  for (const auto& c : state.bank.comp_index) flags.push_back(seen.count(c) != 0);
  return eval::make_candidates(state.bank.comp_index, std::move(flags));
}

std::vector<eval::PredictionRecord> predict(model::ModelState& state, std::span<const world::Sample> samples,
                                            std::size_t session, const world::WorldLatents& latents,
                                            const TrainConfig& config,
                                            std::shared_ptr<const eval::CandidateSet> candidates) {
  const auto& bank = state.bank;
  if (candidates->comps != bank.comp_index) throw ConsistencyError("candidate set does not follow the model's bank");
  std::vector<world::Composition> positions;
  for (const auto& c : bank.comp_index) positions.push_back({*bank.attr_row(c.attr), *bank.obj_row(c.obj)});

  std::vector<eval::PredictionRecord> out;
  out.reserve(samples.size());
  numcore::NoGradScope off;
  constexpr std::size_t chunk = 64;
  for (std::size_t s = 0; s < samples.size(); s += chunk) {
    const auto part = samples.subspan(s, std::min(chunk, samples.size() - s));
    auto b = model::forward(state, part, latents, model::Mode::Eval, config.model);
    const std::size_t ka = b.p_a.cols(), ko = b.p_o.cols(), kc = b.p_c.cols();
    for (std::size_t i = 0; i < part.size(); ++i) {
      std::span<const double> pa = b.p_a.values().subspan(i * ka, ka);
      std::span<const double> po = b.p_o.values().subspan(i * ko, ko);
      std::span<const double> pc = b.p_c.values().subspan(i * kc, kc);
      eval::PredictionRecord r;
      r.sample_id = (static_cast<std::uint64_t>(session) << 32) | (s + i);
      r.truth = part[i].label;
      r.candidates = candidates;
      r.scores = eval::combined_score(pc, pa, po, positions, config.inference);
      r.attr_pred = bank.attr_ids[eval::argmax(pa)];
      r.obj_pred = bank.obj_ids[eval::argmax(po)];
      out.push_back(std::move(r));
    }
  }
  return out;
}

SessionEvaluation evaluate_session(model::ModelState& state, std::span<const world::SessionSpec> sessions,
                                   std::span<const std::vector<world::Sample>> test_sets, std::size_t t,
                                   const world::WorldLatents& latents, const TrainConfig& config) {
  if (t >= sessions.size() || test_sets.size() <= t) throw IndexError("no test set for session " + std::to_string(t));
  auto cands = std::make_shared<const eval::CandidateSet>(candidate_set(state, sessions, t));
  SessionEvaluation ev;
  ev.session = t;
  for (std::size_t i = 0; i <= t; ++i) {
    ev.records.push_back(predict(state, test_sets[i], i, latents, config, cands));
    ev.slices.push_back(eval::evaluate(ev.records.back(), t, eval::Scope::Slice, i));
  }
  ev.zs = eval::evaluate(ev.records[t], t, eval::Scope::ZSEval, t);
  auto all = eval::czs_accumulate(ev.records);
  ev.czs = eval::evaluate(all, t, eval::Scope::CZSEval);
  ev.czs_curve = eval::bias_sweep(all);
  return ev;
}

world::WorldLatents run_world(const TrainConfig& config, const world::CompositionSpace& space) {
  return world::spawn_world(space.attributes().size(), space.objects().size(), config.d, config.L, config.sigma,
                            config.world_seed());
}

ProtocolResult run_protocol(const TrainConfig& config, const world::CompositionSpace& space,
                            std::span<const world::SessionSpec> sessions, const SessionHook& hook) {
  config.validate();
  if (sessions.empty()) throw ValidationError("no sessions to train");
  auto violations = world::validate_splits(space, sessions);
  if (!violations.empty()) throw ValidationError("invalid splits: " + violations.front().detail);

  const auto latents = run_world(config, space);
  std::vector<std::vector<world::Sample>> tests;
  for (const auto& s : sessions) tests.push_back(test_samples(latents, s, config));

  ProtocolResult result;
  result.splits_digest = world::splits_digest(space, sessions);
  TeacherRegistry registry;
  const std::size_t T = sessions.size();
  std::vector<std::vector<std::optional<double>>> auc(T, std::vector<std::optional<double>>(T));
  for (std::size_t t = 0; t < T; ++t) {
    const auto data = training_samples(latents, sessions[t], config);
    auto trained = train_session(space, sessions[t], data, latents, registry, config);
    registry.add(trained.teacher);

    SessionOutcome outcome;
    outcome.state = model::clone_state(registry.latest().state());
    outcome.evaluation = evaluate_session(outcome.state, sessions, tests, t, latents, config);
    outcome.epoch_loss = std::move(trained.epoch_loss);
    for (std::size_t i = 0; i <= t; ++i) auc[i][t] = outcome.evaluation.slices[i].auc;
    log::info("session " + std::to_string(t) + " accumulated AUC " + std::to_string(outcome.evaluation.czs.auc));
    if (hook) hook(outcome);
    result.sessions.push_back(std::move(outcome));
  }
  registry.verify_all();
  result.forgetting = eval::forgetting(auc, T);
  return result;
}

}  // namespace cczsl::continual
