// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/numcore/gradcheck.hpp"
#include "cczsl/numcore/ops.hpp"
#include "cczsl/world/latents.hpp"
#include "cczsl/world/space.hpp"
#include "cczsl/world/table.hpp"
#include "support/random.hpp"

namespace w = cczsl::world;
namespace nc = cczsl::numcore;
using cczsl::testing::Gen;

namespace {

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(BuildSpace, FullProductAndDuplicates) {
  auto s = w::build_space({"red", "blue"}, {"car", "cup"}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  EXPECT_EQ(s.compositions().size(), 4u);
  EXPECT_EQ(*s.attr_index("blue"), 1u);
  try {
    w::build_space({"red", "red"}, {"car"}, {{0, 0}});
    FAIL();
  } catch (const cczsl::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("red"), std::string::npos);
  }
  EXPECT_THROW(w::build_space({"a"}, {"o"}, {{0, 0}, {0, 0}}), cczsl::ValidationError);
  EXPECT_THROW(w::build_space({"a"}, {"o"}, {{1, 0}}), cczsl::ValidationError);
}

TEST(BuildSpace, UtZapposShape) {
  auto t = w::load_table_splits(w::bundled_table_path(), "utzappos");
  EXPECT_EQ(t.space.attributes().size(), 16u);
  EXPECT_EQ(t.space.objects().size(), 12u);
}

TEST(SplitConstrained, SmallGridPassesValidation) {
  auto space = w::grid_space(4, 4);
  const double frac[] = {0.5};
  auto specs = w::split_constrained(space, 2, 7, frac);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_TRUE(w::validate_splits(space, specs).empty());
}

TEST(SplitConstrained, PigeonholeIsInfeasible) {
  auto space = w::grid_space(2, 2);
  const double frac[] = {0.5};
  EXPECT_THROW(w::split_constrained(space, space.compositions().size() + 1, 1, frac), cczsl::InfeasibleError);
}

TEST(SplitConstrained, DeterministicInSeed) {
  auto space = w::grid_space(6, 5);
  const double frac[] = {0.6};
  auto a = w::split_constrained(space, 3, 11, frac);
  auto b = w::split_constrained(space, 3, 11, frac);
  EXPECT_EQ(w::splits_digest(space, a), w::splits_digest(space, b));
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(a[s].seen, b[s].seen);
    EXPECT_EQ(a[s].unseen, b[s].unseen);
  }
}

TEST(SplitConstrained, UtZapposGridShapes) {
  auto space = w::grid_space(16, 12);
  const double frac[] = {0.6};
  auto specs = w::split_constrained(space, 3, 0, frac);
  EXPECT_EQ(specs[0].attrs.size(), 8u);
  EXPECT_EQ(specs[1].attrs.size(), 4u);
  EXPECT_EQ(specs[2].attrs.size(), 4u);
  EXPECT_EQ(specs[0].objs.size(), 6u);
  EXPECT_EQ(specs[1].objs.size(), 3u);
  EXPECT_EQ(specs[2].objs.size(), 3u);
}

// 200 seeded spaces of varying shape, density and session count.
TEST(SplitConstrained, FuzzAlwaysValidAndCovering) {
  int generated = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Gen g(seed);
    const std::size_t na = 3 + g.index(12), no = 3 + g.index(12);
    std::vector<std::string> an, on;
    for (std::size_t i = 0; i < na; ++i) an.push_back("a" + std::to_string(i));
    for (std::size_t i = 0; i < no; ++i) on.push_back("o" + std::to_string(i));
    std::vector<w::Composition> comps;
    const double density = g.uniform(0.4, 1.0);
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t o = 0; o < no; ++o)
        if (g.uniform(0, 1) < density) comps.push_back({a, o});
    if (comps.empty()) comps.push_back({0, 0});
    auto space = w::build_space(an, on, comps);
    const std::size_t sessions = 1 + g.index(4);
    const double frac[] = {g.uniform(0.2, 0.8)};
    std::vector<w::SessionSpec> specs;
    try {
      specs = w::split_constrained(space, sessions, seed, frac);
    } catch (const cczsl::InfeasibleError&) {
      continue;
    }
    ++generated;
    EXPECT_TRUE(w::validate_splits(space, specs).empty()) << "seed " << seed;
    std::set<std::size_t> listed_a, used_a, listed_o, used_o;
    for (const auto& s : specs) {
      EXPECT_FALSE(s.seen.empty());
      EXPECT_FALSE(s.unseen.empty());
      listed_a.insert(s.attrs.begin(), s.attrs.end());
      listed_o.insert(s.objs.begin(), s.objs.end());
      for (auto a : w::used_attrs(s)) used_a.insert(a);
      for (auto o : w::used_objs(s)) used_o.insert(o);
    }
    EXPECT_EQ(listed_a, used_a);
    EXPECT_EQ(listed_o, used_o);
  }
  EXPECT_GT(generated, 150);
}

TEST(ValidateSplits, ReportsEveryViolation) {
  auto space = w::grid_space(2, 2);
  w::SessionSpec s0{0, {0, 1}, {0, 1}, {{0, 0}}, {}, {{0, 1}}};
  w::SessionSpec s1{1, {}, {}, {{1, 1}}, {}, {{1, 0}}};
  std::vector<w::SessionSpec> ok{s0, s1};
  EXPECT_TRUE(w::validate_splits(space, ok).empty());

  auto cross = ok;
  cross[1].seen.push_back({0, 0});
  auto v = w::validate_splits(space, cross);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, w::SplitViolation::Kind::CrossSession);

  auto intra = ok;
  intra[0].unseen.push_back({0, 0});
  v = w::validate_splits(space, intra);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, w::SplitViolation::Kind::IntraSession);

  auto both = cross;
  both[0].unseen.push_back({0, 0});
  both[1].attrs.push_back(9);
  EXPECT_EQ(w::validate_splits(space, both).size(), 3u);
}

TEST(ValidateSplits, PrimitiveMustBeIntroducedFirst) {
  auto space = w::grid_space(2, 2);
  w::SessionSpec s0{0, {0}, {0}, {{0, 0}}, {}, {{1, 0}}};
  std::vector<w::SessionSpec> specs{s0};
  auto v = w::validate_splits(space, specs);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, w::SplitViolation::Kind::InvalidPrimitive);
}

TEST(TableSplits, UtZapposCounts) {
  auto t = w::load_table_splits(w::bundled_table_path(), "utzappos");
  const std::size_t expect[3][5] = {{8, 6, 24, 7, 9}, {4, 3, 27, 10, 14}, {4, 3, 32, 13, 13}};
  ASSERT_EQ(t.sessions.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& sp = t.sessions[s];
    EXPECT_EQ(sp.attrs.size(), expect[s][0]);
    EXPECT_EQ(sp.objs.size(), expect[s][1]);
    EXPECT_EQ(sp.seen.size(), expect[s][2]);
    EXPECT_EQ(sp.val.size(), expect[s][3]);
    EXPECT_EQ(sp.unseen.size(), expect[s][4]);
  }
  EXPECT_TRUE(w::validate_splits(t.space, t.sessions).empty());
}

TEST(TableSplits, CgqaCounts) {
  auto t = w::load_table_splits(w::bundled_table_path(), "cgqa");
  const std::size_t expect[6][5] = {{233, 363, 2392, 958, 730}, {35, 58, 491, 168, 172}, {32, 67, 772, 358, 265},
                                    {36, 64, 836, 366, 275},    {39, 62, 562, 225, 166}, {38, 60, 539, 217, 203}};
  ASSERT_EQ(t.sessions.size(), 6u);
  for (std::size_t s = 0; s < 6; ++s) {
    const auto& sp = t.sessions[s];
    EXPECT_EQ(sp.attrs.size(), expect[s][0]);
    EXPECT_EQ(sp.objs.size(), expect[s][1]);
    EXPECT_EQ(sp.seen.size(), expect[s][2]);
    EXPECT_EQ(sp.val.size(), expect[s][3]);
    EXPECT_EQ(sp.unseen.size(), expect[s][4]);
  }
  EXPECT_TRUE(w::validate_splits(t.space, t.sessions).empty());
}

TEST(TableSplits, SeenPairsCoverNewPrimitives) {
  for (const char* name : {"utzappos", "cgqa"}) {
    auto t = w::load_table_splits(w::bundled_table_path(), name);
    for (const auto& s : t.sessions) {
      std::set<std::size_t> a, o;
      for (const auto& c : s.seen) {
        a.insert(c.attr);
        o.insert(c.obj);
      }
      for (auto x : s.attrs) EXPECT_TRUE(a.count(x)) << name << " session " << s.index;
      for (auto x : s.objs) EXPECT_TRUE(o.count(x)) << name << " session " << s.index;
    }
  }
}

TEST(TableSplits, CountMismatchIsSchemaError) {
  const std::string path = ::testing::TempDir() + "/bad_split.json";
  {
    std::ofstream out(path);
    out << R"({"format_version": 1, "datasets": {"toy": {"sessions": [
      {"counts": {"attrs": 1, "objs": 1, "seen": 2, "val": 0, "unseen": 0},
       "attrs": ["a"], "objs": ["o"], "seen": [["a", "o"]], "val": [], "unseen": []}]}}})";
  }
  EXPECT_THROW(w::load_table_splits(path, "toy"), cczsl::SchemaError);
  EXPECT_THROW(w::load_table_splits(path, "missing"), cczsl::SchemaError);
  EXPECT_THROW(w::load_table_splits(path + ".nope", "toy"), cczsl::SchemaError);
}

TEST(SpawnWorld, DeterministicUnitRows) {
  auto a = w::spawn_world(16, 12, 64, 8, 0.1, 0);
  auto b = w::spawn_world(16, 12, 64, 8, 0.1, 0);
  EXPECT_TRUE(bit_equal(a.attr_dirs.values(), b.attr_dirs.values()));
  EXPECT_TRUE(bit_equal(a.obj_dirs.values(), b.obj_dirs.values()));
  EXPECT_TRUE(bit_equal(a.text_w1.values(), b.text_w1.values()));
  for (const auto* m : {&a.attr_dirs, &a.obj_dirs}) {
    for (std::size_t i = 0; i < m->rows(); ++i) {
      auto row = m->values().subspan(i * 64, 64);
      EXPECT_NEAR(std::sqrt(dot(row, row)), 1.0, 1e-9);
    }
  }
  EXPECT_THROW(w::spawn_world(2, 2, 3, 8, 0.1, 0), cczsl::ConfigError);
}

TEST(SpawnWorld, RandomDirectionsAreNearlyOrthogonal) {
  auto lat = w::spawn_world(16, 12, 64, 8, 0.1, 0);
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = i + 1; j < 16; ++j) {
      total += std::fabs(dot(lat.attr_dirs.values().subspan(i * 64, 64), lat.attr_dirs.values().subspan(j * 64, 64)));
      ++pairs;
    }
  EXPECT_LT(total / pairs, 0.5);
}

TEST(SpawnWorld, TextWeightsIndependentOfDataNoise) {
  auto a = w::spawn_world(4, 4, 8, 4, 0.0, 3);
  auto b = w::spawn_world(4, 4, 8, 4, 0.5, 3);
  EXPECT_TRUE(bit_equal(a.text_w1.values(), b.text_w1.values()));
  EXPECT_TRUE(bit_equal(a.attr_dirs.values(), b.attr_dirs.values()));
}

TEST(RenderSample, NoiselessClsIsExact) {
  auto lat = w::spawn_world(3, 3, 16, 2, 0.0, 5);
  auto s = w::render_sample(lat, {1, 2}, 99);
  std::vector<double> ref(16);
  double n = 0.0;
  for (std::size_t j = 0; j < 16; ++j) {
    ref[j] = lat.attr_dirs.at(1, j) + lat.obj_dirs.at(2, j);
    n += ref[j] * ref[j];
  }
  for (std::size_t j = 0; j < 16; ++j) EXPECT_DOUBLE_EQ(s.cls[j], ref[j] / std::sqrt(n));
  EXPECT_EQ(s.patches.rows(), 2u);
  // sigma = 0: cls does not depend on the sample seed.
  auto t = w::render_sample(lat, {1, 2}, 100);
  EXPECT_TRUE(bit_equal(s.cls.values(), t.cls.values()));
}

TEST(RenderSample, DeterministicAndValidated) {
  auto lat = w::spawn_world(3, 3, 16, 4, 0.1, 5);
  auto a = w::render_sample(lat, {0, 1}, 7), b = w::render_sample(lat, {0, 1}, 7);
  EXPECT_TRUE(bit_equal(a.cls.values(), b.cls.values()));
  EXPECT_TRUE(bit_equal(a.patches.values(), b.patches.values()));
  EXPECT_THROW(w::render_sample(lat, {3, 0}, 1), cczsl::IndexError);
}

// Monte-Carlo regression: 1000 draws at sigma 0.1, d 64.
TEST(RenderSample, NoisyClsStaysCloseToClean) {
  auto lat = w::spawn_world(16, 12, 64, 8, 0.1, 0);
  int close = 0;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    w::Composition c{k % 16, (k / 16) % 12};
    auto s = w::render_sample(lat, c, cczsl::derive_seed(1, "mc", {k}));
    std::vector<double> clean(64);
    for (std::size_t j = 0; j < 64; ++j) clean[j] = lat.attr_dirs.at(c.attr, j) + lat.obj_dirs.at(c.obj, j);
    const double cos = dot(s.cls.values(), clean) / std::sqrt(dot(clean, clean));
    if (cos > 0.9) ++close;
  }
  EXPECT_GE(close, 950);
}

TEST(TextEncoder, UnitNormDeterministicAndFrozen) {
  auto lat = w::spawn_world(4, 4, 16, 4, 0.1, 2);
  auto w1_before = std::vector<double>(lat.text_w1.values().begin(), lat.text_w1.values().end());
  Gen g(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto seq = g.matrix(1 + g.index(6), 16, 3.0);
    auto e = w::frozen_text_encode(seq, lat);
    EXPECT_NEAR(std::sqrt(dot(e.values(), e.values())), 1.0, 1e-9);
    auto e2 = w::frozen_text_encode(seq, lat);
    EXPECT_TRUE(bit_equal(e.values(), e2.values()));
  }
  auto e1 = w::frozen_text_encode(g.matrix(3, 16), lat);
  auto e2 = w::frozen_text_encode(g.matrix(3, 16), lat);
  EXPECT_FALSE(bit_equal(e1.values(), e2.values()));
  EXPECT_TRUE(bit_equal(lat.text_w1.values(), w1_before));
  EXPECT_FALSE(lat.text_w1.requires_grad());
  EXPECT_THROW(w::frozen_text_encode(nc::Tensor::vector({1, 2, 3, 4}), lat), cczsl::RankError);
}

TEST(TextEncoder, GradientMatchesFiniteDifferences) {
  auto lat = w::spawn_world(4, 4, 8, 4, 0.1, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Gen g(seed);
    auto seq = g.param({5, 8});
    auto probe = g.vector(8);
    auto f = [&] { return nc::sum(nc::mul(w::frozen_text_encode(seq, lat), probe)); };
    EXPECT_LT(nc::grad_check(f, {seq}), 1e-4);
  }
  EXPECT_TRUE(lat.text_w1.grad().empty());
}
