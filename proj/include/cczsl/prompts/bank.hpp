// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cczsl/numcore/tensor.hpp"
#include "cczsl/world/space.hpp"

namespace cczsl::prompts {

// Learnable soft vectors, one row per known attribute and object, plus one
// shared context prefix per branch. Rows are addressed by bank position;
// attr_ids/obj_ids map positions to primitive indices of the space.
struct PromptBank {
  numcore::Tensor attr_rows;  // |A_known| x d
  numcore::Tensor obj_rows;   // |O_known| x d
  numcore::Tensor prefix_a;   // m x d
  numcore::Tensor prefix_o;   // m x d
  numcore::Tensor prefix_c;   // m x d
  std::vector<std::size_t> attr_ids;
  std::vector<std::size_t> obj_ids;
  std::vector<world::Composition> comp_index;  // primitive indices, known order
  std::size_t m = 0;
  std::uint64_t seed = 0;

  std::size_t dim() const { return attr_rows.cols(); }
  std::optional<std::size_t> attr_row(std::size_t attr) const;
  std::optional<std::size_t> obj_row(std::size_t obj) const;
  std::optional<std::size_t> comp_position(const world::Composition& c) const;

  // Rebuilds the lookup tables after attr_ids/obj_ids/comp_index change.
  void reindex();
  // Deep copy with independent parameter storage.
  PromptBank clone() const;

 private:
  std::unordered_map<std::size_t, std::size_t> attr_pos_, obj_pos_;
  std::unordered_map<world::Composition, std::size_t, world::CompositionHash> comp_pos_;
};

// Compositions of comp_index split by introduction time: [0, comp_head) is
// the head, the rest is the tail introduced by the current session. The
// same split is kept for primitive rows.
struct HeadTailPartition {
  std::size_t comp_head = 0, comp_total = 0;
  std::size_t attr_head = 0, attr_total = 0;
  std::size_t obj_head = 0, obj_total = 0;

  std::size_t comp_tail() const { return comp_total - comp_head; }
  std::size_t attr_tail() const { return attr_total - attr_head; }
  std::size_t obj_tail() const { return obj_total - obj_head; }
};

// Compositions a session adds to the candidate space (seen then unseen).
std::vector<world::Composition> session_compositions(const world::SessionSpec& session);

// Bank for session 0: one unit-norm name-hash row per primitive used by the
// session, prefixes ~ N(0, 0.02^2). The partition has an empty head.
std::pair<PromptBank, HeadTailPartition> init_bank(const world::CompositionSpace& space,
                                                   const world::SessionSpec& session0, std::size_t d,
                                                   std::size_t m, std::uint64_t seed);

// Appends rows for primitives the session uses for the first time and its
// compositions; existing rows are copied bitwise. ConstraintViolation if a
// composition is already known (nothing is modified in that case).
std::pair<PromptBank, HeadTailPartition> expand_bank(const PromptBank& bank, const world::CompositionSpace& space,
                                                     const world::SessionSpec& session);

// Unit-norm seeded pseudo-embedding of a concept name.
std::vector<double> name_embedding(std::string_view kind, std::string_view name, std::size_t d, std::uint64_t seed);

struct Concept {
  enum class Kind { Attr, Obj, Comp };
  Kind kind;
  std::size_t index;  // bank row for Attr/Obj, comp_index position for Comp
};

// [prefix; row] for a primitive (m+1 rows) and [prefix_c; attr row; obj row]
// for a composition (m+2 rows). IndexError for an unknown concept.
numcore::Tensor assemble(const PromptBank& bank, const Concept& concept_ref);

// Mean-pooled prompt sequences for every concept of a branch, equal to
// mean_rows(assemble(...)) row by row but computed in one pass.
numcore::Tensor pooled_attr_prompts(const PromptBank& bank);
numcore::Tensor pooled_obj_prompts(const PromptBank& bank);
numcore::Tensor pooled_comp_prompts(const PromptBank& bank);

}  // namespace cczsl::prompts
