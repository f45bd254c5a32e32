// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/prompts/bank.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/numcore/ops.hpp"

namespace cczsl::prompts {
namespace nc = numcore;
using world::Composition;

std::optional<std::size_t> PromptBank::attr_row(std::size_t attr) const {
  auto it = attr_pos_.find(attr);
  if (it == attr_pos_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> PromptBank::obj_row(std::size_t obj) const {
  auto it = obj_pos_.find(obj);
  if (it == obj_pos_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> PromptBank::comp_position(const Composition& c) const {
  auto it = comp_pos_.find(c);
  if (it == comp_pos_.end()) return std::nullopt;
  return it->second;
}

void PromptBank::reindex() {
  attr_pos_.clear();
  obj_pos_.clear();
  comp_pos_.clear();
  for (std::size_t i = 0; i < attr_ids.size(); ++i) attr_pos_[attr_ids[i]] = i;
  for (std::size_t i = 0; i < obj_ids.size(); ++i) obj_pos_[obj_ids[i]] = i;
  for (std::size_t i = 0; i < comp_index.size(); ++i) comp_pos_[comp_index[i]] = i;
}

PromptBank PromptBank::clone() const {
  PromptBank b = *this;
  b.attr_rows = attr_rows.clone();
  b.obj_rows = obj_rows.clone();
  b.prefix_a = prefix_a.clone();
  b.prefix_o = prefix_o.clone();
  b.prefix_c = prefix_c.clone();
  return b;
}

std::vector<Composition> session_compositions(const world::SessionSpec& session) {
  std::vector<Composition> out = session.seen;
  out.insert(out.end(), session.unseen.begin(), session.unseen.end());
  return out;
}

std::vector<double> name_embedding(std::string_view kind, std::string_view name, std::size_t d, std::uint64_t seed) {
  std::uint64_t h = fnv1a64(kind);
  h = fnv1a64(":", h);
  h = fnv1a64(name, h);
  std::mt19937_64 rng(derive_seed(seed, "concept-name", {h}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  double s = 0.0;
  for (double& x : v) {
    x = normal(rng);
    s += x * x;
  }
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
  return v;
}

namespace {

nc::Tensor prefix(std::size_t m, std::size_t d, std::uint64_t seed, const char* tag) {
  std::mt19937_64 rng(derive_seed(seed, tag));
  std::normal_distribution<double> normal(0.0, 0.02);
  std::vector<double> v(m * d);
  for (double& x : v) x = normal(rng);
  return nc::Tensor::parameter({m, d}, std::move(v));
}

// Appends new primitives and compositions of `session` to `bank` in place.
HeadTailPartition append_session(PromptBank& bank, const world::CompositionSpace& space,
                                 const world::SessionSpec& session, std::vector<double>& attr_vals,
                                 std::vector<double>& obj_vals) {
  const std::size_t d = bank.dim();
  HeadTailPartition part;
  part.attr_head = bank.attr_ids.size();
  part.obj_head = bank.obj_ids.size();
  part.comp_head = bank.comp_index.size();
  const auto comps = session_compositions(session);
  for (const Composition& c : comps) {
    if (c.attr >= space.attributes().size() || c.obj >= space.objects().size() || !space.contains(c)) {
      throw ConstraintViolation("session " + std::to_string(session.index) + " uses a composition outside the space");
    }
    if (bank.comp_position(c)) {
      throw ConstraintViolation("composition \"" + space.name(c) + "\" of session " + std::to_string(session.index) +
                                " is already known");
    }
  }
  for (const Composition& c : comps) {
    if (!bank.attr_row(c.attr)) {
      auto v = name_embedding("attr", space.attributes()[c.attr], d, bank.seed);
      attr_vals.insert(attr_vals.end(), v.begin(), v.end());
      bank.attr_ids.push_back(c.attr);
      bank.reindex();
    }
    if (!bank.obj_row(c.obj)) {
      auto v = name_embedding("obj", space.objects()[c.obj], d, bank.seed);
      obj_vals.insert(obj_vals.end(), v.begin(), v.end());
      bank.obj_ids.push_back(c.obj);
      bank.reindex();
    }
  }
  std::unordered_map<Composition, bool, world::CompositionHash> dup;
  for (const Composition& c : comps) {
    if (!dup.emplace(c, true).second) {
      throw ConstraintViolation("composition \"" + space.name(c) + "\" listed twice in session " +
                                std::to_string(session.index));
    }
    bank.comp_index.push_back(c);
  }
  bank.reindex();
  part.attr_total = bank.attr_ids.size();
  part.obj_total = bank.obj_ids.size();
  part.comp_total = bank.comp_index.size();
  return part;
}

}  // namespace

std::pair<PromptBank, HeadTailPartition> init_bank(const world::CompositionSpace& space,
                                                   const world::SessionSpec& session0, std::size_t d,
                                                   std::size_t m, std::uint64_t seed) {
  if (d == 0 || m == 0) throw ConfigError("prompt bank needs d >= 1 and m >= 1");
  if (session_compositions(session0).empty()) throw ConfigError("session 0 has no compositions");
  PromptBank bank;
  bank.m = m;
  bank.seed = seed;
  // Placeholder one-row tensors carry d until the real rows are built.
  bank.attr_rows = nc::Tensor::zeros({1, d});
  std::vector<double> attr_vals, obj_vals;
  HeadTailPartition part = append_session(bank, space, session0, attr_vals, obj_vals);
  bank.attr_rows = nc::Tensor::parameter({bank.attr_ids.size(), d}, std::move(attr_vals));
  bank.obj_rows = nc::Tensor::parameter({bank.obj_ids.size(), d}, std::move(obj_vals));
  bank.prefix_a = prefix(m, d, seed, "prefix-attr");
  bank.prefix_o = prefix(m, d, seed, "prefix-obj");
  bank.prefix_c = prefix(m, d, seed, "prefix-comp");
  return {std::move(bank), part};
}

std::pair<PromptBank, HeadTailPartition> expand_bank(const PromptBank& bank, const world::CompositionSpace& space,
                                                     const world::SessionSpec& session) {
  PromptBank next = bank;
  std::vector<double> attr_vals(bank.attr_rows.values().begin(), bank.attr_rows.values().end());
  std::vector<double> obj_vals(bank.obj_rows.values().begin(), bank.obj_rows.values().end());
  HeadTailPartition part = append_session(next, space, session, attr_vals, obj_vals);
  const std::size_t d = bank.dim();
  next.attr_rows = nc::Tensor::parameter({next.attr_ids.size(), d}, std::move(attr_vals));
  next.obj_rows = nc::Tensor::parameter({next.obj_ids.size(), d}, std::move(obj_vals));
  return {std::move(next), part};
}

nc::Tensor assemble(const PromptBank& bank, const Concept& c) {
  switch (c.kind) {
    case Concept::Kind::Attr: {
      if (c.index >= bank.attr_ids.size()) throw IndexError("unknown attribute row " + std::to_string(c.index));
      nc::Tensor parts[] = {bank.prefix_a, nc::slice_rows(bank.attr_rows, c.index, c.index + 1)};
      return nc::concat_rows(parts);
    }
    case Concept::Kind::Obj: {
      if (c.index >= bank.obj_ids.size()) throw IndexError("unknown object row " + std::to_string(c.index));
      nc::Tensor parts[] = {bank.prefix_o, nc::slice_rows(bank.obj_rows, c.index, c.index + 1)};
      return nc::concat_rows(parts);
    }
    case Concept::Kind::Comp: {
      if (c.index >= bank.comp_index.size()) throw IndexError("unknown composition " + std::to_string(c.index));
      const Composition& comp = bank.comp_index[c.index];
      const std::size_t a = *bank.attr_row(comp.attr), o = *bank.obj_row(comp.obj);
      nc::Tensor parts[] = {bank.prefix_c, nc::slice_rows(bank.attr_rows, a, a + 1),
                            nc::slice_rows(bank.obj_rows, o, o + 1)};
      return nc::concat_rows(parts);
    }
  }
  throw IndexError("unknown concept kind");
}

nc::Tensor pooled_attr_prompts(const PromptBank& bank) {
  return nc::scale(nc::add_row(bank.attr_rows, nc::sum_rows(bank.prefix_a)), 1.0 / static_cast<double>(bank.m + 1));
}

nc::Tensor pooled_obj_prompts(const PromptBank& bank) {
  return nc::scale(nc::add_row(bank.obj_rows, nc::sum_rows(bank.prefix_o)), 1.0 / static_cast<double>(bank.m + 1));
}

nc::Tensor pooled_comp_prompts(const PromptBank& bank) {
  std::vector<std::size_t> a(bank.comp_index.size()), o(bank.comp_index.size());
  for (std::size_t i = 0; i < bank.comp_index.size(); ++i) {
    a[i] = *bank.attr_row(bank.comp_index[i].attr);
    o[i] = *bank.obj_row(bank.comp_index[i].obj);
  }
  nc::Tensor pair = nc::add(nc::gather_rows(bank.attr_rows, a), nc::gather_rows(bank.obj_rows, o));
  return nc::scale(nc::add_row(pair, nc::sum_rows(bank.prefix_c)), 1.0 / static_cast<double>(bank.m + 2));
}

}  // namespace cczsl::prompts
