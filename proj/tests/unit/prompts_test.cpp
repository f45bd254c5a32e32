// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "cczsl/common/errors.hpp"
#include "cczsl/numcore/gradcheck.hpp"
#include "cczsl/numcore/ops.hpp"
#include "cczsl/prompts/bank.hpp"
#include "cczsl/world/latents.hpp"
#include "support/random.hpp"

namespace p = cczsl::prompts;
namespace w = cczsl::world;
namespace nc = cczsl::numcore;

namespace {

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

struct Toy {
  w::CompositionSpace space = w::grid_space(4, 3);
  // Session 0 uses attrs 0,1 and objs 0,1; session 1 adds attrs 2,3 and obj 2.
  w::SessionSpec s0{0, {0, 1}, {0, 1}, {{0, 0}, {1, 1}}, {}, {{0, 1}}};
  w::SessionSpec s1{1, {2, 3}, {2}, {{2, 0}, {3, 2}, {1, 2}}, {}, {{2, 2}, {0, 2}}};
};

}  // namespace

TEST(InitBank, DeterministicUnitRowsEmptyHead) {
  Toy t;
  auto [a, pa] = p::init_bank(t.space, t.s0, 8, 4, 3);
  auto [b, pb] = p::init_bank(t.space, t.s0, 8, 4, 3);
  EXPECT_TRUE(bit_equal(a.attr_rows.values(), b.attr_rows.values()));
  EXPECT_TRUE(bit_equal(a.prefix_c.values(), b.prefix_c.values()));
  EXPECT_EQ(pa.comp_head, 0u);
  EXPECT_EQ(pa.comp_total, 3u);
  EXPECT_EQ(a.attr_rows.rows(), 2u);
  for (std::size_t i = 0; i < a.attr_rows.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 8; ++j) s += a.attr_rows.at(i, j) * a.attr_rows.at(i, j);
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-9);
  }
  double sq = 0.0;
  for (double v : a.prefix_a.values()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / 32.0), 0.02, 0.01);
}

TEST(InitBank, RenamingOneAttributeChangesOnlyThatRow) {
  Toy t;
  auto renamed = w::build_space({"attr_000", "shiny", "attr_002", "attr_003"}, t.space.objects(),
                                t.space.compositions());
  auto [a, pa] = p::init_bank(t.space, t.s0, 8, 2, 1);
  auto [b, pb] = p::init_bank(renamed, t.s0, 8, 2, 1);
  EXPECT_TRUE(bit_equal(a.attr_rows.values().subspan(0, 8), b.attr_rows.values().subspan(0, 8)));
  EXPECT_FALSE(bit_equal(a.attr_rows.values().subspan(8, 8), b.attr_rows.values().subspan(8, 8)));
  EXPECT_TRUE(bit_equal(a.obj_rows.values(), b.obj_rows.values()));
}

TEST(ExpandBank, CountsAndAppendOnly) {
  Toy t;
  auto [bank, p0] = p::init_bank(t.space, t.s0, 8, 2, 1);
  // Perturb so "bitwise preserved" means preserved trained values.
  bank.attr_rows.mutable_values()[3] += 0.25;
  auto [next, p1] = p::expand_bank(bank, t.space, t.s1);
  EXPECT_EQ(next.attr_rows.rows(), bank.attr_rows.rows() + 2);
  EXPECT_EQ(next.obj_rows.rows(), bank.obj_rows.rows() + 1);
  EXPECT_EQ(p1.comp_tail(), 5u);
  EXPECT_EQ(p1.comp_head, p0.comp_total);
  EXPECT_EQ(p1.attr_head, 2u);
  EXPECT_TRUE(bit_equal(next.attr_rows.values().subspan(0, bank.attr_rows.size()), bank.attr_rows.values()));
  EXPECT_TRUE(bit_equal(next.obj_rows.values().subspan(0, bank.obj_rows.size()), bank.obj_rows.values()));
  for (std::size_t i = 0; i < bank.comp_index.size(); ++i) EXPECT_EQ(next.comp_index[i], bank.comp_index[i]);
}

TEST(ExpandBank, RecurringPrimitiveAddsNoRow) {
  Toy t;
  auto [bank, p0] = p::init_bank(t.space, t.s0, 8, 2, 1);
  w::SessionSpec reuse{1, {}, {}, {{1, 0}}, {}, {}};
  auto [next, p1] = p::expand_bank(bank, t.space, reuse);
  EXPECT_EQ(next.attr_rows.rows(), bank.attr_rows.rows());
  EXPECT_EQ(next.obj_rows.rows(), bank.obj_rows.rows());
  EXPECT_EQ(p1.comp_tail(), 1u);
  EXPECT_EQ(p1.attr_tail(), 0u);
}

TEST(ExpandBank, DuplicateCompositionIsViolationAndLeavesBankIntact) {
  Toy t;
  auto [bank, p0] = p::init_bank(t.space, t.s0, 8, 2, 1);
  w::SessionSpec dup{1, {2}, {}, {{2, 0}, {0, 0}}, {}, {}};
  const auto before = bank.comp_index;
  EXPECT_THROW(p::expand_bank(bank, t.space, dup), cczsl::ConstraintViolation);
  EXPECT_EQ(bank.comp_index, before);
  EXPECT_EQ(bank.attr_rows.rows(), 2u);
}

TEST(Assemble, Shapes) {
  Toy t;
  auto [bank, part] = p::init_bank(t.space, t.s0, 8, 4, 1);
  auto a = p::assemble(bank, {p::Concept::Kind::Attr, 1});
  ASSERT_EQ(a.rows(), 5u);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(a.at(4, j), bank.attr_rows.at(1, j));
  auto c = p::assemble(bank, {p::Concept::Kind::Comp, 1});
  ASSERT_EQ(c.rows(), 6u);
  const auto comp = bank.comp_index[1];
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(c.at(4, j), bank.attr_rows.at(*bank.attr_row(comp.attr), j));
    EXPECT_EQ(c.at(5, j), bank.obj_rows.at(*bank.obj_row(comp.obj), j));
  }
  EXPECT_THROW(p::assemble(bank, {p::Concept::Kind::Obj, 7}), cczsl::IndexError);
}

TEST(Assemble, PooledMatchesPerConceptMean) {
  Toy t;
  auto [b0, p0] = p::init_bank(t.space, t.s0, 8, 3, 1);
  auto [bank, part] = p::expand_bank(b0, t.space, t.s1);
  auto pa = p::pooled_attr_prompts(bank), pc = p::pooled_comp_prompts(bank);
  for (std::size_t i = 0; i < bank.attr_ids.size(); ++i) {
    auto ref = nc::mean_rows(p::assemble(bank, {p::Concept::Kind::Attr, i}));
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(pa.at(i, j), ref[j], 1e-15);
  }
  for (std::size_t i = 0; i < bank.comp_index.size(); ++i) {
    auto ref = nc::mean_rows(p::assemble(bank, {p::Concept::Kind::Comp, i}));
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(pc.at(i, j), ref[j], 1e-15);
  }
}

TEST(Assemble, GradientThroughTextEncoder) {
  Toy t;
  auto lat = w::spawn_world(4, 3, 8, 4, 0.1, 0);
  auto [bank, part] = p::init_bank(t.space, t.s0, 8, 4, 1);
  cczsl::testing::Gen g(5);
  auto probe = g.vector(8);
  auto f = [&] {
    auto e = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Comp, 0}), lat);
    return nc::sum(nc::mul(e, probe));
  };
  EXPECT_LT(nc::grad_check(f, {bank.attr_rows, bank.obj_rows, bank.prefix_c}), 1e-4);
}

TEST(Assemble, CompositionSharesPrimitiveRows) {
  Toy t;
  auto lat = w::spawn_world(4, 3, 8, 4, 0.1, 0);
  auto [bank, part] = p::init_bank(t.space, t.s0, 8, 2, 1);
  const std::size_t row = *bank.attr_row(0);
  auto ea = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Attr, row}), lat);
  auto ec = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Comp, *bank.comp_position({0, 0})}), lat);
  auto ec_other = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Comp, *bank.comp_position({1, 1})}), lat);
  bank.attr_rows.mutable_values()[row * 8] += 0.3;
  auto ea2 = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Attr, row}), lat);
  auto ec2 = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Comp, *bank.comp_position({0, 0})}), lat);
  auto ec_other2 = w::frozen_text_encode(p::assemble(bank, {p::Concept::Kind::Comp, *bank.comp_position({1, 1})}), lat);
  EXPECT_FALSE(bit_equal(ea.values(), ea2.values()));
  EXPECT_FALSE(bit_equal(ec.values(), ec2.values()));
  EXPECT_TRUE(bit_equal(ec_other.values(), ec_other2.values()));
}

TEST(Partition, HeadIsUnionOfEarlierTails) {
  auto space = w::grid_space(10, 8);
  const double frac[] = {0.5};
  auto specs = w::split_constrained(space, 4, 2, frac);
  auto [bank, part] = p::init_bank(space, specs[0], 8, 2, 1);
  std::size_t tails = part.comp_tail();
  for (std::size_t s = 1; s < specs.size(); ++s) {
    auto [next, np] = p::expand_bank(bank, space, specs[s]);
    EXPECT_EQ(np.comp_head, tails);
    tails += np.comp_tail();
    EXPECT_EQ(np.comp_total, tails);
    bank = next;
  }
}
