// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/continual/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/log.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/continual/optimizer.hpp"
#include "cczsl/numcore/ops.hpp"
#include "cczsl/numcore/tape.hpp"
#include "cczsl/prompts/bank.hpp"

namespace cczsl::continual {

namespace nc = numcore;
using nc::Tensor;

std::vector<world::Sample> training_samples(const world::WorldLatents& latents, const world::SessionSpec& session,
                                            const TrainConfig& config) {
  std::vector<world::Sample> out;
  out.reserve(session.seen.size() * config.samples_per_seen);
  for (const auto& c : session.seen) {
    for (std::size_t k = 0; k < config.samples_per_seen; ++k) {
      out.push_back(world::render_sample(latents, c, derive_seed(config.seed, "train-sample", {session.index, c.attr, c.obj, k})));
    }
  }
  return out;
}

std::vector<world::Sample> test_samples(const world::WorldLatents& latents, const world::SessionSpec& session,
                                        const TrainConfig& config) {
  std::vector<world::Sample> out;
  for (const auto* group : {&session.seen, &session.unseen}) {
    for (const auto& c : *group) {
      for (std::size_t k = 0; k < config.test_samples; ++k) {
        out.push_back(world::render_sample(latents, c, derive_seed(config.seed, "test-sample", {session.index, c.attr, c.obj, k})));
      }
    }
  }
  return out;
}

void TeacherRegistry::add(losses::TeacherSnapshot teacher) {
  if (teacher.session() != teachers_.size()) {
    throw ConsistencyError("teacher of session " + std::to_string(teacher.session()) + " registered at position " +
                           std::to_string(teachers_.size()));
  }
  teacher.verify();
  teachers_.push_back(std::move(teacher));
}

const losses::TeacherSnapshot& TeacherRegistry::at(std::size_t i) const {
  if (i >= teachers_.size()) throw IndexError("no teacher for session " + std::to_string(i));
  teachers_[i].verify();
  return teachers_[i];
}

const losses::TeacherSnapshot& TeacherRegistry::latest() const {
  if (teachers_.empty()) throw IndexError("teacher registry is empty");
  return at(teachers_.size() - 1);
}

std::vector<const losses::TeacherSnapshot*> TeacherRegistry::active(std::size_t max_teachers) const {
  const std::size_t n = teachers_.size();
  const std::size_t keep = max_teachers == 0 ? n : std::min(n, max_teachers);
  std::vector<const losses::TeacherSnapshot*> out;
  for (std::size_t i = n - keep; i < n; ++i) out.push_back(&at(i));
  return out;
}

void TeacherRegistry::verify_all() const {
  for (const auto& t : teachers_) t.verify();
}

namespace {

void check_session(const world::CompositionSpace& space, const world::SessionSpec& session,
                   const TeacherRegistry& registry) {
  const std::string where = "session " + std::to_string(session.index);
  if (session.index != registry.size()) {
    throw ConstraintViolation(where + " trained after " + std::to_string(registry.size()) + " earlier sessions");
  }
  if (session.seen.empty()) throw ConstraintViolation(where + " has no seen pairs");
  const prompts::PromptBank* known = registry.empty() ? nullptr : &registry.latest().state().bank;
  const std::set<std::size_t> new_attrs(session.attrs.begin(), session.attrs.end());
  const std::set<std::size_t> new_objs(session.objs.begin(), session.objs.end());
  std::set<world::Composition> mine;
  for (const auto* group : {&session.seen, &session.val, &session.unseen}) {
    for (const auto& c : *group) {
      if (!space.contains(c)) throw ConstraintViolation(where + " lists a pair outside the composition space");
      if (!mine.insert(c).second) throw ConstraintViolation(where + " lists " + space.name(c) + " twice");
      if (known && known->comp_position(c)) throw ConstraintViolation(where + " repeats composition " + space.name(c));
      const bool attr_ok = new_attrs.count(c.attr) || (known && known->attr_row(c.attr));
      const bool obj_ok = new_objs.count(c.obj) || (known && known->obj_row(c.obj));
      if (!attr_ok || !obj_ok) {
        throw ConstraintViolation(where + " pair " + space.name(c) + " uses a primitive no session has introduced");
      }
    }
  }
}

// Row-major logits of one teacher for every training sample.
struct CachedLogits {
  std::vector<double> z_a, z_o, z_c;
  std::size_t ka = 0, ko = 0, kc = 0;
  losses::BranchOverlaps overlap;
};

CachedLogits cache_teacher(const losses::TeacherSnapshot& teacher, std::span<const world::Sample> data,
                           const world::WorldLatents& latents, const model::ModelOptions& options,
                           const prompts::PromptBank& student_bank) {
  CachedLogits c;
  constexpr std::size_t chunk = 64;
  for (std::size_t s = 0; s < data.size(); s += chunk) {
    auto tl = teacher.logits(data.subspan(s, std::min(chunk, data.size() - s)), latents, options, student_bank);
    c.ka = tl.z_a.cols();
    c.ko = tl.z_o.cols();
    c.kc = tl.z_c.cols();
    c.z_a.insert(c.z_a.end(), tl.z_a.values().begin(), tl.z_a.values().end());
    c.z_o.insert(c.z_o.end(), tl.z_o.values().begin(), tl.z_o.values().end());
    c.z_c.insert(c.z_c.end(), tl.z_c.values().begin(), tl.z_c.values().end());
    c.overlap = tl.overlap;
  }
  return c;
}

Tensor gather_cached(const std::vector<double>& all, std::size_t k, std::span<const std::size_t> rows) {
  std::vector<double> v;
  v.reserve(rows.size() * k);
  for (std::size_t r : rows) v.insert(v.end(), all.begin() + r * k, all.begin() + (r + 1) * k);
  return Tensor::matrix(rows.size(), k, std::move(v));
}

// Overlap restricted to primitives the current session actually uses: CAL
// anchors recurring primitives only.
losses::Overlap restrict_overlap(const losses::Overlap& ov, const std::vector<std::size_t>& ids,
                                 const std::vector<std::size_t>& used) {
  const std::set<std::size_t> keep(used.begin(), used.end());
  losses::Overlap out;
  for (std::size_t k = 0; k < ov.teacher.size(); ++k) {
    if (keep.count(ids[ov.student[k]])) {
      out.teacher.push_back(ov.teacher[k]);
      out.student.push_back(ov.student[k]);
    }
  }
  return out;
}

}  // namespace

SessionResult train_session(const world::CompositionSpace& space, const world::SessionSpec& session,
                            std::span<const world::Sample> data, const world::WorldLatents& latents,
                            const TeacherRegistry& registry, const TrainConfig& config) {
  config.validate();
  check_session(space, session, registry);
  if (data.empty()) throw ConfigError("session " + std::to_string(session.index) + " has no training data");

  model::ModelState student;
  if (registry.empty()) {
    auto [bank, part] = prompts::init_bank(space, session, config.d, config.m, derive_seed(config.seed, "bank"));
    student.bank = std::move(bank);
    student.partition = part;
    student.params = model::init_params(config.d, derive_seed(config.seed, "params"), config.dropout);
  } else {
    student = model::clone_state(registry.latest().state());
    auto [bank, part] = prompts::expand_bank(student.bank, space, session);
    student.bank = std::move(bank);
    student.partition = part;
  }
  std::vector<Tensor> params;
  for (auto& nt : model::learnable(student)) {
    nt.tensor.set_requires_grad(true);
    params.push_back(nt.tensor);
  }

  losses::Targets all_targets;
  for (const auto& s : data) {
    auto a = student.bank.attr_row(s.label.attr);
    auto o = student.bank.obj_row(s.label.obj);
    auto c = student.bank.comp_position(s.label);
    if (!a || !o || !c) throw ConsistencyError("training label " + space.name(s.label) + " is not in the bank");
    all_targets.attr.push_back(*a);
    all_targets.obj.push_back(*o);
    all_targets.comp.push_back(*c);
  }

  const bool first = registry.empty();
  const auto& w = config.loss;
  const auto teachers = registry.active(config.max_teachers);
  const auto pi = losses::recency_weights(teachers.size(), w.recency_gamma);
  std::vector<CachedLogits> cached;
  std::vector<losses::Overlap> cal_attr, cal_obj;
  if (!first) {
    const auto used_a = world::used_attrs(session), used_o = world::used_objs(session);
    for (const auto* t : teachers) {
      if (w.lambda_kd != 0.0) cached.push_back(cache_teacher(*t, data, latents, config.model, student.bank));
      auto ov = losses::label_overlap(t->state().bank, student.bank);
      cal_attr.push_back(restrict_overlap(ov.attr, student.bank.attr_ids, used_a));
      cal_obj.push_back(restrict_overlap(ov.obj, student.bank.obj_ids, used_o));
    }
  }

  Optimizer opt(config.optimizer, config.lr, params);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  SessionResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(config.seed, "shuffle", {session.index, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, order.size() - start));
      std::vector<world::Sample> batch;
      losses::Targets targets;
      for (std::size_t i : idx) {
        batch.push_back(data[i]);
        targets.attr.push_back(all_targets.attr[i]);
        targets.obj.push_back(all_targets.obj[i]);
        targets.comp.push_back(all_targets.comp[i]);
      }
      opt.zero_grad();
      nc::Tape tape;
      Tensor loss;
      {
        nc::TapeScope scope(tape);
        auto bundle = model::forward(student, batch, latents, model::Mode::Train, config.model,
                                     derive_seed(config.seed, "dropout", {session.index, epoch, batches}));
        Tensor ce = losses::ce_total(bundle, targets, w);
        if (first) {
          loss = ce;
        } else {
          losses::LossComponents c{ce, Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0),
                                   Tensor::scalar(0.0)};
          if (w.lambda_kd != 0.0) {
            std::vector<losses::TeacherLogits> tl;
            for (const auto& cl : cached) {
              tl.push_back({gather_cached(cl.z_a, cl.ka, idx), gather_cached(cl.z_o, cl.ko, idx),
                            gather_cached(cl.z_c, cl.kc, idx), cl.overlap});
            }
            c.kd = losses::cskd_total(tl, bundle, pi, w);
          }
          if (w.lambda_cal != 0.0) {
            Tensor acc = Tensor::scalar(0.0);
            for (std::size_t t = 0; t < teachers.size(); ++t) {
              acc = nc::add(acc, nc::scale(losses::cal(student.bank, teachers[t]->state().bank, cal_attr[t], cal_obj[t]),
                                           pi[t]));
            }
            c.cal = acc;
          }
          if (w.lambda_opl != 0.0) c.opl = losses::opl(student.bank, student.partition);
          if (w.lambda_idl != 0.0) c.idl = losses::idl(student.bank, student.partition);
          loss = losses::total(c, w);
        }
      }
      if (loss.requires_grad()) {
        nc::backward(loss, tape);
        opt.step();
      }
      loss_sum += loss.item();
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    log::info("session " + std::to_string(session.index) + " epoch " + std::to_string(epoch) +
              " loss " + std::to_string(result.epoch_loss.back()));
  }
  registry.verify_all();
  result.teacher = losses::TeacherSnapshot::freeze(session.index, student);
  result.state = std::move(student);
  return result;
}

}  // namespace cczsl::continual
