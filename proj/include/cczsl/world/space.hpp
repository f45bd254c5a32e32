// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cczsl::world {

// Attribute/object pair addressed by indices into a CompositionSpace.
struct Composition {
  std::size_t attr = 0;
  std::size_t obj = 0;
  auto operator<=>(const Composition&) const = default;
};

struct CompositionHash {
  std::size_t operator()(const Composition& c) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(c.attr) << 32) ^ c.obj);
  }
};

class CompositionSpace {
 public:
  CompositionSpace() = default;

  const std::vector<std::string>& attributes() const { return attrs_; }
  const std::vector<std::string>& objects() const { return objs_; }
  const std::vector<Composition>& compositions() const { return comps_; }

  std::optional<std::size_t> attr_index(const std::string& name) const;
  std::optional<std::size_t> obj_index(const std::string& name) const;
  bool contains(const Composition& c) const { return comp_set_.count(c) != 0; }
  // "attr obj" display name.
  std::string name(const Composition& c) const;

 private:
  friend CompositionSpace build_space(std::vector<std::string>, std::vector<std::string>,
                                      std::vector<Composition>);
  std::vector<std::string> attrs_, objs_;
  std::vector<Composition> comps_;
  std::unordered_map<std::string, std::size_t> attr_lookup_, obj_lookup_;
  std::unordered_map<Composition, std::size_t, CompositionHash> comp_set_;
};

// Validates names (non-empty, unique per kind) and pairs (valid, unique).
// Input order is preserved. ValidationError names the offending entry.
CompositionSpace build_space(std::vector<std::string> attr_names, std::vector<std::string> obj_names,
                             std::vector<Composition> comps);

// Full attribute x object grid with names attr_000.., obj_000...
CompositionSpace grid_space(std::size_t n_attrs, std::size_t n_objs);

// One training stage. attrs/objs list the primitives that first appear in
// this session; later sessions may reuse them.
struct SessionSpec {
  std::size_t index = 0;
  std::vector<std::size_t> attrs;
  std::vector<std::size_t> objs;
  std::vector<Composition> seen;
  std::vector<Composition> val;
  std::vector<Composition> unseen;
};

// Primitives touched by the compositions (seen, val, unseen) of a session.
std::vector<std::size_t> used_attrs(const SessionSpec& s);
std::vector<std::size_t> used_objs(const SessionSpec& s);

// Partitions the compositions of `space` into `sessions` disjoint sessions.
// Primitives are introduced in batches (half of each kind in session 0, the
// rest spread evenly); a composition belongs to the session in which its
// later primitive arrives. Within a session, round(fraction*n) compositions
// are seen, chosen so that every newly introduced primitive appears in at
// least one seen pair when possible. `seen_fraction` holds one entry per
// session or a single entry for all. InfeasibleError names the first session
// that cannot get one seen and one unseen pair.
std::vector<SessionSpec> split_constrained(const CompositionSpace& space, std::size_t sessions,
                                           std::uint64_t seed, std::span<const double> seen_fraction);

struct SplitViolation {
  enum class Kind { CrossSession, IntraSession, InvalidPrimitive };
  Kind kind;
  std::string detail;
};

// Every violation of composition disjointness (across and within sessions)
// and of primitive validity. Empty means the split is valid.
std::vector<SplitViolation> validate_splits(const CompositionSpace& space,
                                            std::span<const SessionSpec> specs);

// Stable FNV digest of the space and the session lists.
std::uint64_t splits_digest(const CompositionSpace& space, std::span<const SessionSpec> specs);

}  // namespace cczsl::world
