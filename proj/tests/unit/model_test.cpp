// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "cczsl/common/errors.hpp"
#include "cczsl/model/model.hpp"
#include "cczsl/numcore/gradcheck.hpp"
#include "cczsl/numcore/ops.hpp"
#include "cczsl/numcore/tape.hpp"
#include "support/random.hpp"
#include "support/toy.hpp"

namespace m = cczsl::model;
namespace nc = cczsl::numcore;
namespace w = cczsl::world;
using cczsl::testing::Gen;
using cczsl::testing::ToyWorld;
using nc::Tensor;

namespace {

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

// Brute-force single-head attention.
std::vector<double> attention_oracle(const Tensor& q, const Tensor& p, const m::FusionBlock& b) {
  const std::size_t k = q.rows(), L = p.rows(), d = q.cols();
  auto proj = [d](const Tensor& x, const Tensor& wm, std::size_t r) {
    std::vector<double> out(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < d; ++t) out[j] += x.at(r, t) * wm.at(t, j);
    return out;
  };
  std::vector<double> out(k * d, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    auto qi = proj(q, b.wq, i);
    std::vector<double> s(L);
    double mx = -1e300;
    for (std::size_t l = 0; l < L; ++l) {
      auto kl = proj(p, b.wk, l);
      s[l] = 0.0;
      for (std::size_t j = 0; j < d; ++j) s[l] += qi[j] * kl[j];
      s[l] /= std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[l]);
    }
    double z = 0.0;
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t l = 0; l < L; ++l) {
      auto vl = proj(p, b.wv, l);
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += s[l] / z * vl[j];
    }
  }
  return out;
}

}  // namespace

TEST(Decompose, IdentityPathAndClsPassThrough) {
  ToyWorld toy(8, 4);
  auto& heads = toy.state0.params.heads;
  for (auto* h : {&heads.attr, &heads.obj}) {
    h->w = Tensor::identity(8);
    h->w.set_requires_grad(true);
    std::fill(h->running_var.begin(), h->running_var.end(), 1.0 - h->eps);
  }
  auto s = toy.samples({{1, 2}}, 3)[0];
  auto f = m::decompose(s, heads, m::Mode::Eval);
  for (std::size_t j = 0; j < 8; ++j) {
    double ref = 0.0;
    for (std::size_t l = 0; l < 4; ++l) ref += std::max(0.0, s.patches.at(l, j));
    EXPECT_NEAR(f.v_a[j], ref / 4.0, 1e-15);
  }
  EXPECT_EQ(f.v_c.id(), s.cls.id());
  EXPECT_TRUE(bit_equal(f.v_c.values(), s.cls.values()));
}

TEST(Decompose, DropoutOnlyInTraining) {
  ToyWorld toy(8, 4, 1, 0.1, 0.5);
  auto s = toy.samples({{0, 0}}, 1)[0];
  auto e1 = m::decompose(s, toy.state0.params.heads, m::Mode::Eval);
  auto e2 = m::decompose(s, toy.state0.params.heads, m::Mode::Eval);
  EXPECT_TRUE(bit_equal(e1.v_a.values(), e2.v_a.values()));
  auto t = m::decompose(s, toy.state0.params.heads, m::Mode::Train, 7);
  EXPECT_FALSE(bit_equal(e1.v_a.values(), t.v_a.values()));
}

TEST(CrossAttend, SingleKeyAndDuplicates) {
  Gen g(2);
  auto block = m::init_params(6, 3).fusion.agnostic;
  auto q = g.matrix(3, 6);
  auto one = g.matrix(1, 6);
  auto out = m::cross_attend(q, one, block);
  auto vproj = nc::matmul(one, block.wv);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out.at(i, j), vproj[j], 1e-15);
  std::vector<double> rep;
  for (int r = 0; r < 4; ++r) rep.insert(rep.end(), one.values().begin(), one.values().end());
  auto dup = m::cross_attend(q, Tensor::matrix(4, 6, rep), block);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(dup.at(i, j), vproj[j], 1e-14);
}

TEST(CrossAttend, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Gen g(seed);
    auto block = m::init_params(5, seed).fusion.aware;
    auto q = g.matrix(2, 5), p = g.matrix(3, 5);
    auto out = m::cross_attend(q, p, block);
    auto ref = attention_oracle(q, p, block);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-10);
  }
}

TEST(Sagm2f, ZeroMlpGivesBiasRowsAndKeepsShape) {
  Gen g(4);
  auto block = m::init_params(6, 1).fusion.agnostic;
  block.mlp.w1 = Tensor::zeros({6, 6});
  block.mlp.w2 = Tensor::zeros({6, 6});
  block.mlp.b2 = g.vector(6);
  auto [a, o] = m::sagm2f(g.matrix(5, 6), g.matrix(3, 6), g.matrix(4, 6), block);
  ASSERT_EQ(a.rows(), 5u);
  ASSERT_EQ(o.rows(), 3u);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a.at(i, j), block.mlp.b2[j]);
}

TEST(Sagm2f, GradientsReachPromptRows) {
  ToyWorld toy(6, 3);
  auto s = toy.samples({{1, 1}}, 2)[0];
  Gen g(9);
  auto probe_a = g.matrix(2, 6), probe_o = g.matrix(2, 6);
  auto& st = toy.state0;
  auto f = [&] {
    auto te = m::text_embeddings(st.bank, toy.latents);
    auto [a, o] = m::sagm2f(te.e_a, te.e_o, s.patches, st.params.fusion.agnostic);
    return nc::add(nc::sum(nc::mul(a, probe_a)), nc::sum(nc::mul(o, probe_o)));
  };
  {
    nc::KinkProbe probe;
    nc::NoGradScope off;
    f();
    ASSERT_GT(probe.min_margin(), 1e-4);
  }
  EXPECT_LT(nc::grad_check(f, {st.bank.attr_rows, st.bank.obj_rows, st.bank.prefix_a}), 1e-4);
}

TEST(Sawm2f, PartitionCases) {
  Gen g(5);
  auto block = m::init_params(6, 2).fusion.aware;
  auto head = g.matrix(3, 6), tail = g.matrix(2, 6);
  auto p1 = g.matrix(4, 6), p2 = g.matrix(4, 6);
  // Empty head: every row takes the attention path.
  auto only_tail = m::sawm2f(std::nullopt, tail, p1, block);
  auto ref = m::apply_mlp(nc::add(tail, m::cross_attend(tail, p1, block)), block.mlp);
  EXPECT_TRUE(bit_equal(only_tail.values(), ref.values()));
  // Empty tail: pure MLP, independent of the image.
  auto only_head = m::sawm2f(head, std::nullopt, p1, block);
  EXPECT_TRUE(bit_equal(only_head.values(), m::apply_mlp(head, block.mlp).values()));
  // Head rows ignore the image, tail rows do not.
  auto a = m::sawm2f(head, tail, p1, block), b = m::sawm2f(head, tail, p2, block);
  EXPECT_TRUE(bit_equal(a.values().subspan(0, 18), b.values().subspan(0, 18)));
  EXPECT_FALSE(bit_equal(a.values().subspan(18), b.values().subspan(18)));
  EXPECT_THROW(m::sawm2f(std::nullopt, std::nullopt, p1, block), cczsl::ConsistencyError);
}

TEST(Logits, IdentityScaleAndArgmax) {
  Gen g(6);
  auto v = g.vector(5);
  auto e = g.matrix(4, 5);
  auto vn = nc::l2_normalize(v);
  std::vector<double> rows(vn.values().begin(), vn.values().end());
  rows.insert(rows.end(), e.values().begin() + 5, e.values().end());
  auto z0 = m::logits(v, Tensor::matrix(4, 5, rows), Tensor::scalar(0.0));
  EXPECT_NEAR(z0[0], 1.0, 1e-15);
  auto z1 = m::logits(v, e, Tensor::scalar(0.0));
  auto z100 = m::logits(v, e, Tensor::scalar(std::log(100.0)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z100[i], 100.0 * z1[i], 1e-12);
  for (int trial = 0; trial < 50; ++trial) {
    auto vv = g.vector(5), ee = g.matrix(6, 5);
    auto argmax = [](const Tensor& z) {
      return std::max_element(z.values().begin(), z.values().end()) - z.values().begin();
    };
    EXPECT_EQ(argmax(m::logits(vv, ee, Tensor::scalar(g.uniform(-3, 5)))), argmax(m::logits(vv, ee, Tensor::scalar(0.0))));
    EXPECT_EQ(argmax(m::logits(nc::scale(vv, 7.5), ee, Tensor::scalar(1.0))), argmax(m::logits(vv, ee, Tensor::scalar(1.0))));
  }
  EXPECT_THROW(m::logits(Tensor::zeros({5}), e, Tensor::scalar(0.0)), cczsl::DegenerateVectorError);
}

TEST(Forward, ProbabilitiesAndDeterminism) {
  ToyWorld toy(8, 3);
  auto batch = toy.samples({{0, 0}, {2, 2}, {3, 1}}, 4);
  m::ModelOptions opt;
  auto a = m::forward(toy.state1, batch, toy.latents, m::Mode::Eval, opt);
  auto b = m::forward(toy.state1, batch, toy.latents, m::Mode::Eval, opt);
  EXPECT_EQ(a.z_c.cols(), toy.state1.bank.comp_index.size());
  EXPECT_EQ(a.z_a.cols(), 4u);
  for (const auto* p : {&a.p_a, &a.p_o, &a.p_c}) {
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < p->cols(); ++c) s += p->at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
  EXPECT_TRUE(bit_equal(a.z_c.values(), b.z_c.values()));
  EXPECT_TRUE(bit_equal(a.p_a.values(), b.p_a.values()));
}

TEST(Forward, BatchedMatchesSingleSampleBlocks) {
  ToyWorld toy(8, 3);
  auto batch = toy.samples({{0, 0}, {2, 2}}, 5);
  auto& st = toy.state1;
  auto bundle = m::forward(st, batch, toy.latents, m::Mode::Eval, {});
  auto te = m::text_embeddings(st.bank, toy.latents);
  const std::size_t head = st.partition.comp_head, total = st.partition.comp_total;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    auto f = m::decompose(batch[s], st.params.heads, m::Mode::Eval);
    auto [ea, eo] = m::sagm2f(te.e_a, te.e_o, batch[s].patches, st.params.fusion.agnostic);
    auto ec = m::sawm2f(nc::slice_rows(te.e_c, 0, head), nc::slice_rows(te.e_c, head, total), batch[s].patches,
                        st.params.fusion.aware);
    auto za = m::logits(f.v_a, ea, st.params.log_scale);
    auto zo = m::logits(f.v_o, eo, st.params.log_scale);
    auto zc = m::logits(f.v_c, ec, st.params.log_scale);
    for (std::size_t i = 0; i < za.size(); ++i) EXPECT_NEAR(bundle.z_a.at(s, i), za[i], 1e-12);
    for (std::size_t i = 0; i < zo.size(); ++i) EXPECT_NEAR(bundle.z_o.at(s, i), zo[i], 1e-12);
    for (std::size_t i = 0; i < zc.size(); ++i) EXPECT_NEAR(bundle.z_c.at(s, i), zc[i], 1e-12);
  }
}

TEST(Forward, HeadLogitsIgnoreTheImageTailLogitsDoNot) {
  ToyWorld toy(8, 3);
  auto& st = toy.state1;
  auto te = m::text_embeddings(st.bank, toy.latents);
  auto s1 = toy.samples({{0, 0}}, 1)[0], s2 = toy.samples({{3, 2}}, 2)[0];
  const std::size_t head = st.partition.comp_head, total = st.partition.comp_total;
  auto a = m::sawm2f(nc::slice_rows(te.e_c, 0, head), nc::slice_rows(te.e_c, head, total), s1.patches, st.params.fusion.aware);
  auto b = m::sawm2f(nc::slice_rows(te.e_c, 0, head), nc::slice_rows(te.e_c, head, total), s2.patches, st.params.fusion.aware);
  EXPECT_TRUE(bit_equal(a.values().subspan(0, head * 8), b.values().subspan(0, head * 8)));
  EXPECT_FALSE(bit_equal(a.values().subspan(head * 8), b.values().subspan(head * 8)));
}

TEST(Forward, FusionModes) {
  ToyWorld toy(8, 3);
  auto batch = toy.samples({{0, 0}, {2, 2}}, 5);
  for (auto mode : {m::CompFusion::TailOnly, m::CompFusion::UpdateBoth, m::CompFusion::FreezeHead, m::CompFusion::Off}) {
    m::ModelOptions opt;
    opt.comp_fusion = mode;
    auto b = m::forward(toy.state1, batch, toy.latents, m::Mode::Eval, opt);
    EXPECT_EQ(b.z_c.cols(), toy.state1.bank.comp_index.size()) << m::to_string(mode);
    EXPECT_EQ(m::comp_fusion_from_string(m::to_string(mode)), mode);
  }
  EXPECT_THROW(m::comp_fusion_from_string("both"), cczsl::ConfigError);
}

TEST(Forward, PartitionMismatchIsConsistencyError) {
  ToyWorld toy(8, 3);
  auto batch = toy.samples({{0, 0}}, 5);
  toy.state1.partition.comp_total += 1;
  EXPECT_THROW(m::forward(toy.state1, batch, toy.latents, m::Mode::Eval, {}), cczsl::ConsistencyError);
}

TEST(Forward, TrainingUpdatesRunningStatistics) {
  ToyWorld toy(8, 3);
  auto batch = toy.samples({{0, 0}, {1, 1}, {2, 0}}, 5);
  auto before = toy.state1.params.heads.attr.running_mean;
  m::forward(toy.state1, batch, toy.latents, m::Mode::Train, {}, 3);
  EXPECT_NE(before, toy.state1.params.heads.attr.running_mean);
  for (double v : toy.state1.params.heads.attr.running_var) EXPECT_GT(v, 0.0);
  // A single sample falls back to the running statistics.
  auto one = toy.samples({{0, 0}}, 6);
  auto snapshot = toy.state1.params.heads.attr.running_mean;
  m::forward(toy.state1, one, toy.latents, m::Mode::Train, {}, 3);
  EXPECT_EQ(snapshot, toy.state1.params.heads.attr.running_mean);
}
