// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/continual/checkpoint.hpp"
#include "cczsl/continual/optimizer.hpp"
#include "cczsl/continual/protocol.hpp"
#include "cczsl/continual/trainer.hpp"
#include "cczsl/numcore/ops.hpp"

namespace c = cczsl::continual;
namespace w = cczsl::world;
namespace m = cczsl::model;
namespace nc = cczsl::numcore;

namespace {

struct Scenario {
  w::CompositionSpace space = w::grid_space(6, 5);
  std::vector<w::SessionSpec> sessions;
  c::TrainConfig config;

  explicit Scenario(std::size_t n_sessions = 3) {
    const double frac[] = {0.6};
    sessions = w::split_constrained(space, n_sessions, 11, frac);
    config.epochs = 3;
    config.samples_per_seen = 3;
    config.test_samples = 2;
    config.d = 16;
    config.L = 3;
    config.m = 2;
    config.batch_size = 8;
    config.seed = 5;
  }
};

// Trains sessions [0, upto] and returns the registry.
c::TeacherRegistry train_upto(const Scenario& s, std::size_t upto, const w::WorldLatents& latents) {
  c::TeacherRegistry reg;
  for (std::size_t t = 0; t <= upto; ++t) {
    auto data = c::training_samples(latents, s.sessions[t], s.config);
    auto r = c::train_session(s.space, s.sessions[t], data, latents, reg, s.config);
    reg.add(r.teacher);
  }
  return reg;
}

std::vector<double> flat_params(const m::ModelState& st) {
  std::vector<double> out;
  for (const auto& nt : m::learnable(st)) out.insert(out.end(), nt.tensor.values().begin(), nt.tensor.values().end());
  for (const auto* h : {&st.params.heads.attr, &st.params.heads.obj}) {
    out.insert(out.end(), h->running_mean.begin(), h->running_mean.end());
    out.insert(out.end(), h->running_var.begin(), h->running_var.end());
  }
  return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Mean (1 - cos) between the teacher's rows and the student's rows for the
// primitives the student's session reuses.
double recurring_drift(const cczsl::prompts::PromptBank& teacher, const cczsl::prompts::PromptBank& student,
                       const w::SessionSpec& session) {
  auto row_drift = [](std::span<const double> a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      dot += a[j] * b[j];
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    return 1.0 - dot / std::sqrt(na * nb);
  };
  const std::size_t d = teacher.dim();
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t a : w::used_attrs(session)) {
    auto tr = teacher.attr_row(a);
    if (!tr) continue;
    sum += row_drift(teacher.attr_rows.values().subspan(*tr * d, d),
                     student.attr_rows.values().subspan(*student.attr_row(a) * d, d));
    ++n;
  }
  for (std::size_t o : w::used_objs(session)) {
    auto tr = teacher.obj_row(o);
    if (!tr) continue;
    sum += row_drift(teacher.obj_rows.values().subspan(*tr * d, d),
                     student.obj_rows.values().subspan(*student.obj_row(o) * d, d));
    ++n;
  }
  EXPECT_GT(n, 0u);
  return sum / static_cast<double>(n);
}

}  // namespace

TEST(Optimizer, SgdStepIsPlainGradientDescent) {
  nc::Tensor p = nc::Tensor::parameter({2}, {1.0, -2.0});
  c::OptimizerConfig cfg;
  cfg.kind = c::OptimizerKind::Sgd;
  c::Optimizer opt(cfg, 0.1, {p});
  p.storage()->grad[0] = 0.5;
  p.storage()->grad[1] = -1.0;
  opt.step();
  EXPECT_DOUBLE_EQ(p.values()[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p.values()[1], -2.0 + 0.1);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizer, FirstAdamStepMovesByLearningRate) {
  // After one step the bias-corrected moments are g and g^2.
  nc::Tensor p = nc::Tensor::parameter({3}, {0.0, 0.0, 0.0});
  c::Optimizer opt(c::OptimizerConfig{}, 1e-3, {p});
  const double g[] = {0.3, -4.0, 1e-2};
  for (int i = 0; i < 3; ++i) p.storage()->grad[i] = g[i];
  opt.step();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.values()[i], -1e-3 * g[i] / (std::fabs(g[i]) + 1e-8), 1e-15);
}

TEST(Optimizer, NonFiniteGradientLeavesParametersUntouched) {
  nc::Tensor a = nc::Tensor::parameter({1}, {1.0});
  nc::Tensor b = nc::Tensor::parameter({1}, {2.0});
  c::Optimizer opt(c::OptimizerConfig{}, 1e-2, {a, b});
  a.storage()->grad[0] = 1.0;
  b.storage()->grad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(opt.step(), cczsl::NumericError);
  EXPECT_EQ(a.values()[0], 1.0);
  EXPECT_EQ(b.values()[0], 2.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(TrainConfig, RejectsBadFieldsByName) {
  c::TrainConfig cfg;
  cfg.epochs = 0;
  try {
    cfg.validate();
    FAIL() << "epochs = 0 accepted";
  } catch (const cczsl::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.epochs"), std::string::npos);
  }
  cfg = {};
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), cczsl::ConfigError);
  cfg = {};
  cfg.lr = std::numeric_limits<double>::infinity();
  EXPECT_THROW(cfg.validate(), cczsl::ConfigError);
  EXPECT_NO_THROW(c::TrainConfig{}.validate());
}

TEST(TrainSession, RegistryCountsOneThenTwo) {
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  c::TeacherRegistry reg;
  auto d0 = c::training_samples(latents, s.sessions[0], s.config);
  reg.add(c::train_session(s.space, s.sessions[0], d0, latents, reg, s.config).teacher);
  EXPECT_EQ(reg.size(), 1u);
  auto d1 = c::training_samples(latents, s.sessions[1], s.config);
  reg.add(c::train_session(s.space, s.sessions[1], d1, latents, reg, s.config).teacher);
  EXPECT_EQ(reg.size(), 2u);
  EXPECT_EQ(reg.at(0).session(), 0u);
  EXPECT_EQ(reg.at(1).session(), 1u);
}

TEST(TrainSession, RegistryRejectsOutOfOrderTeacher) {
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  auto reg = train_upto(s, 0, latents);
  auto again = reg.at(0);
  EXPECT_THROW(reg.add(again), cczsl::ConsistencyError);
}

TEST(TrainSession, SessionZeroIgnoresContinualWeights) {
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  auto data = c::training_samples(latents, s.sessions[0], s.config);
  c::TeacherRegistry empty;
  auto full = c::train_session(s.space, s.sessions[0], data, latents, empty, s.config);
  auto cfg = s.config;
  cfg.loss.lambda_kd = cfg.loss.lambda_cal = cfg.loss.lambda_opl = cfg.loss.lambda_idl = 0.0;
  auto plain = c::train_session(s.space, s.sessions[0], data, latents, empty, cfg);
  EXPECT_EQ(full.epoch_loss, plain.epoch_loss);
  EXPECT_TRUE(bitwise_equal(flat_params(full.state), flat_params(plain.state)));
}

TEST(TrainSession, StudentStartsFromTeacherCopy) {
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  auto reg = train_upto(s, 0, latents);
  const auto before = flat_params(reg.latest().state());
  auto cfg = s.config;
  cfg.lr = 1e-12;  // effectively frozen: the student must equal its start
  cfg.epochs = 1;
  auto data = c::training_samples(latents, s.sessions[1], cfg);
  auto r = c::train_session(s.space, s.sessions[1], data, latents, reg, cfg);
  const auto& tb = reg.latest().state().bank;
  const std::size_t d = tb.dim();
  for (std::size_t i = 0; i < tb.attr_ids.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      EXPECT_NEAR(r.state.bank.attr_rows.values()[i * d + j], tb.attr_rows.values()[i * d + j], 1e-9);
    }
  }
  EXPECT_EQ(r.state.partition.comp_head, tb.comp_index.size());
  EXPECT_GT(r.state.partition.comp_total, r.state.partition.comp_head);
  // Training the student never touches the teacher.
  EXPECT_TRUE(bitwise_equal(before, flat_params(reg.latest().state())));
  EXPECT_NO_THROW(reg.verify_all());
}

TEST(TrainSession, ConstraintViolationAbortsBeforeMutation) {
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  auto reg = train_upto(s, 0, latents);
  const auto digest = reg.latest().digest();
  const auto before = flat_params(reg.latest().state());

  auto bad = s.sessions[1];
  bad.seen.push_back(s.sessions[0].seen.front());  // already introduced in session 0
  auto data = c::training_samples(latents, s.sessions[1], s.config);
  EXPECT_THROW(c::train_session(s.space, bad, data, latents, reg, s.config), cczsl::ConstraintViolation);

  auto skipped = s.sessions[2];  // session index 2 with only one teacher
  EXPECT_THROW(c::train_session(s.space, skipped, data, latents, reg, s.config), cczsl::ConstraintViolation);

  auto unknown = s.sessions[1];
  unknown.attrs.clear();  // its new primitives are then unaccounted for
  EXPECT_THROW(c::train_session(s.space, unknown, data, latents, reg, s.config), cczsl::ConstraintViolation);

  EXPECT_EQ(reg.size(), 1u);
  EXPECT_EQ(reg.latest().digest(), digest);
  EXPECT_TRUE(bitwise_equal(before, flat_params(reg.latest().state())));
}

TEST(TrainSession, ExactlySessionIndexTeachersParticipate) {
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  c::TeacherRegistry reg;
  for (std::size_t t = 0; t < s.sessions.size(); ++t) {
    EXPECT_EQ(reg.active(s.config.max_teachers).size(), t);
    auto data = c::training_samples(latents, s.sessions[t], s.config);
    reg.add(c::train_session(s.space, s.sessions[t], data, latents, reg, s.config).teacher);
  }
  auto last = reg.active(1);
  ASSERT_EQ(last.size(), 1u);
  EXPECT_EQ(last[0]->session(), 2u);
  auto all = reg.active(0);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0]->session(), 0u);
}

TEST(TrainSession, TeacherCapChangesTheSecondStudent) {
  // With two prior teachers, keeping only the latest one must change the
  // objective; equal results would mean the older teacher never took part.
  Scenario s;
  const auto latents = c::run_world(s.config, s.space);
  auto reg = train_upto(s, 1, latents);
  auto data = c::training_samples(latents, s.sessions[2], s.config);
  auto both = c::train_session(s.space, s.sessions[2], data, latents, reg, s.config);
  auto cfg = s.config;
  cfg.max_teachers = 1;
  auto one = c::train_session(s.space, s.sessions[2], data, latents, reg, cfg);
  EXPECT_NE(both.epoch_loss, one.epoch_loss);
}

TEST(TrainSession, CalKeepsRecurringRowsCloser) {
  Scenario s;
  s.config.epochs = 6;
  s.config.samples_per_seen = 5;
  const auto latents = c::run_world(s.config, s.space);
  auto reg = train_upto(s, 0, latents);
  auto data = c::training_samples(latents, s.sessions[1], s.config);
  auto with = c::train_session(s.space, s.sessions[1], data, latents, reg, s.config);
  auto cfg = s.config;
  cfg.loss.lambda_cal = 0.0;
  auto without = c::train_session(s.space, s.sessions[1], data, latents, reg, cfg);
  const auto& tb = reg.latest().state().bank;
  const double d_with = recurring_drift(tb, with.state.bank, s.sessions[1]);
  const double d_without = recurring_drift(tb, without.state.bank, s.sessions[1]);
  EXPECT_GT(d_without, 0.0);
  EXPECT_LT(d_with, d_without);
}

TEST(Protocol, SingleSessionGivesOneReport) {
  Scenario s(1);
  s.sessions.resize(1);
  auto r = c::run_protocol(s.config, s.space, s.sessions);
  ASSERT_EQ(r.sessions.size(), 1u);
  ASSERT_EQ(r.forgetting.auc.size(), 1u);
  ASSERT_EQ(r.forgetting.auc[0].size(), 1u);
  EXPECT_TRUE(r.forgetting.auc[0][0].has_value());
  EXPECT_EQ(r.forgetting.f_auc, 0.0);
  EXPECT_EQ(r.sessions[0].evaluation.slices.size(), 1u);
}

TEST(Protocol, FixedSeedIsDeterministic) {
  Scenario s;
  auto a = c::run_protocol(s.config, s.space, s.sessions);
  auto b = c::run_protocol(s.config, s.space, s.sessions);
  ASSERT_EQ(a.sessions.size(), b.sessions.size());
  for (std::size_t t = 0; t < a.sessions.size(); ++t) {
    const auto& x = a.sessions[t].evaluation;
    const auto& y = b.sessions[t].evaluation;
    EXPECT_EQ(x.czs.auc, y.czs.auc);
    EXPECT_EQ(x.czs.hm, y.czs.hm);
    EXPECT_EQ(x.czs.comp_acc, y.czs.comp_acc);
    EXPECT_EQ(a.sessions[t].epoch_loss, b.sessions[t].epoch_loss);
    EXPECT_TRUE(bitwise_equal(flat_params(a.sessions[t].state), flat_params(b.sessions[t].state)));
  }
  EXPECT_EQ(a.forgetting.f_auc, b.forgetting.f_auc);
}

TEST(Protocol, SeedChangesTheRun) {
  Scenario s;
  s.sessions.resize(1);
  auto a = c::run_protocol(s.config, s.space, s.sessions);
  s.config.seed += 1;
  auto b = c::run_protocol(s.config, s.space, s.sessions);
  EXPECT_NE(a.sessions[0].epoch_loss, b.sessions[0].epoch_loss);
}

TEST(Protocol, InvalidSplitsAreRejected) {
  Scenario s;
  auto bad = s.sessions;
  bad[1].unseen.push_back(bad[0].seen.front());
  EXPECT_THROW(c::run_protocol(s.config, s.space, bad), cczsl::ValidationError);
}

TEST(Protocol, ForgettingMatrixIsFilledFromSlices) {
  Scenario s;
  auto r = c::run_protocol(s.config, s.space, s.sessions);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i <= t; ++i) {
      ASSERT_TRUE(r.forgetting.auc[i][t].has_value());
      EXPECT_EQ(*r.forgetting.auc[i][t], r.sessions[t].evaluation.slices[i].auc);
    }
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    s_.sessions.resize(2);
    result_ = c::run_protocol(s_.config, s_.space, s_.sessions);
    const auto& out = result_.sessions[1];
    ck_.session = 1;
    ck_.state = m::clone_state(out.state);
    ck_.world_seed = s_.config.world_seed();
    ck_.config = "{\"train\":{\"epochs\":3}}";
    ck_.metrics = {{"czs.auc", out.evaluation.czs.auc}, {"czs.hm", out.evaluation.czs.hm},
                   {"czs.comp_acc", out.evaluation.czs.comp_acc}};
    path_ = (std::filesystem::temp_directory_path() / ("cczsl_ckpt_" + std::to_string(::getpid()) + ".bin")).string();
  }
  void TearDown() override { std::filesystem::remove(path_); }

  Scenario s_{2};
  c::ProtocolResult result_;
  c::Checkpoint ck_;
  std::string path_;
};

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  c::save_checkpoint(ck_, path_);
  auto back = c::load_checkpoint(path_);
  EXPECT_EQ(back.version, c::kCheckpointVersion);
  EXPECT_EQ(back.session, 1u);
  EXPECT_EQ(back.world_seed, ck_.world_seed);
  EXPECT_EQ(back.config, ck_.config);
  EXPECT_EQ(back.metrics, ck_.metrics);
  EXPECT_EQ(back.state.bank.comp_index, ck_.state.bank.comp_index);
  EXPECT_EQ(back.state.bank.attr_ids, ck_.state.bank.attr_ids);
  EXPECT_EQ(back.state.partition.comp_head, ck_.state.partition.comp_head);
  EXPECT_EQ(back.state.partition.attr_total, ck_.state.partition.attr_total);
  EXPECT_TRUE(bitwise_equal(flat_params(back.state), flat_params(ck_.state)));
  auto names_a = m::learnable(back.state), names_b = m::learnable(ck_.state);
  ASSERT_EQ(names_a.size(), names_b.size());
  for (std::size_t i = 0; i < names_a.size(); ++i) EXPECT_EQ(names_a[i].tensor.shape(), names_b[i].tensor.shape());
}

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const auto first = c::serialize_checkpoint(ck_);
  const auto second = c::serialize_checkpoint(c::parse_checkpoint(first));
  EXPECT_EQ(first, second);
}

TEST_F(CheckpointTest, TruncationIsAnIntegrityError) {
  const auto bytes = c::serialize_checkpoint(ck_);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(c::parse_checkpoint(std::string_view(bytes).substr(0, cut)), cczsl::IntegrityError) << cut;
  }
}

TEST_F(CheckpointTest, FlippedByteIsAnIntegrityError) {
  auto bytes = c::serialize_checkpoint(ck_);
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(c::parse_checkpoint(bytes), cczsl::IntegrityError);
}

TEST_F(CheckpointTest, VersionMismatchIsNamed) {
  auto bytes = c::serialize_checkpoint(ck_);
  bytes[8] = 9;  // version field follows the 8-byte magic
  const auto body = std::string_view(bytes).substr(0, bytes.size() - 8);
  const std::uint64_t sum =
      cczsl::fnv1a64(std::span(reinterpret_cast<const unsigned char*>(body.data()), body.size()));
  std::memcpy(bytes.data() + body.size(), &sum, 8);
  try {
    c::parse_checkpoint(bytes);
    FAIL() << "version 9 accepted";
  } catch (const cczsl::IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST_F(CheckpointTest, ReloadedModelReproducesStoredMetrics) {
  c::save_checkpoint(ck_, path_);
  auto back = c::load_checkpoint(path_);
  const auto latents = c::run_world(s_.config, s_.space);
  std::vector<std::vector<w::Sample>> tests;
  for (const auto& sp : s_.sessions) tests.push_back(c::test_samples(latents, sp, s_.config));
  auto ev = c::evaluate_session(back.state, s_.sessions, tests, back.session, latents, s_.config);
  ASSERT_EQ(back.metrics.size(), 3u);
  EXPECT_NEAR(ev.czs.auc, back.metrics[0].second, 1e-9);
  EXPECT_NEAR(ev.czs.hm, back.metrics[1].second, 1e-9);
  EXPECT_NEAR(ev.czs.comp_acc, back.metrics[2].second, 1e-9);
}
