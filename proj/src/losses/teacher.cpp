// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/losses/teacher.hpp"

#include <cstring>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/numcore/tape.hpp"

namespace cczsl::losses {

namespace {

std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t h) {
  return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(v.data()), v.size_bytes()), h);
}

}  // namespace

std::uint64_t state_digest(const model::ModelState& state) {
  std::uint64_t h = fnv1a64("model-state");
  for (const auto& nt : model::learnable(state)) {
    h = fnv1a64(nt.name, h);
    h = hash_doubles(nt.tensor.values(), h);
  }
  for (const auto* head : {&state.params.heads.attr, &state.params.heads.obj}) {
    h = hash_doubles(head->running_mean, h);
    h = hash_doubles(head->running_var, h);
  }
  for (const auto& c : state.bank.comp_index) h = mix64(h ^ mix64((c.attr << 20) ^ c.obj));
  for (std::size_t a : state.bank.attr_ids) h = mix64(h ^ a);
  for (std::size_t o : state.bank.obj_ids) h = mix64(h ^ (o + 0x5bd1e995));
  return h;
}

TeacherSnapshot TeacherSnapshot::freeze(std::size_t session, const model::ModelState& state) {
  TeacherSnapshot t;
  t.session_ = session;
  t.state_ = std::make_shared<model::ModelState>(model::clone_state(state));
  for (auto& nt : model::learnable(*t.state_)) nt.tensor.set_requires_grad(false);
  t.digest_ = state_digest(*t.state_);
  return t;
}

void TeacherSnapshot::verify() const {
  if (state_digest(*state_) != digest_) {
    throw IntegrityError("teacher of session " + std::to_string(session_) + " changed after it was frozen");
  }
}

TeacherLogits TeacherSnapshot::logits(std::span<const world::Sample> batch, const world::WorldLatents& latents,
                                      const model::ModelOptions& options, const prompts::PromptBank& student) const {
  numcore::NoGradScope off;
  auto bundle = model::forward(*state_, batch, latents, model::Mode::Eval, options);
  return {bundle.z_a, bundle.z_o, bundle.z_c, label_overlap(state_->bank, student)};
}

}  // namespace cczsl::losses
