// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/world/space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <unordered_set>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"

namespace cczsl::world {

std::optional<std::size_t> CompositionSpace::attr_index(const std::string& name) const {
  auto it = attr_lookup_.find(name);
  if (it == attr_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> CompositionSpace::obj_index(const std::string& name) const {
  auto it = obj_lookup_.find(name);
  if (it == obj_lookup_.end()) return std::nullopt;
  return it->second;
}

std::string CompositionSpace::name(const Composition& c) const {
  return attrs_.at(c.attr) + " " + objs_.at(c.obj);
}

CompositionSpace build_space(std::vector<std::string> attr_names, std::vector<std::string> obj_names,
                             std::vector<Composition> comps) {
  CompositionSpace space;
  if (attr_names.empty() || obj_names.empty()) throw ValidationError("space needs at least one attribute and object");
  auto index_names = [](const std::vector<std::string>& names, const char* kind,
                        std::unordered_map<std::string, std::size_t>& lookup) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].empty()) throw ValidationError(std::string("empty ") + kind + " name at position " + std::to_string(i));
      if (!lookup.emplace(names[i], i).second) {
        throw ValidationError(std::string("duplicate ") + kind + " name \"" + names[i] + "\"");
      }
    }
  };
  index_names(attr_names, "attribute", space.attr_lookup_);
  index_names(obj_names, "object", space.obj_lookup_);
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Composition& c = comps[i];
    if (c.attr >= attr_names.size() || c.obj >= obj_names.size()) {
      throw ValidationError("composition (" + std::to_string(c.attr) + "," + std::to_string(c.obj) +
                            ") references an unknown primitive");
    }
    if (!space.comp_set_.emplace(c, i).second) {
      throw ValidationError("duplicate composition \"" + attr_names[c.attr] + " " + obj_names[c.obj] + "\"");
    }
  }
  space.attrs_ = std::move(attr_names);
  space.objs_ = std::move(obj_names);
  space.comps_ = std::move(comps);
  return space;
}

CompositionSpace grid_space(std::size_t n_attrs, std::size_t n_objs) {
  std::vector<std::string> attrs, objs;
  char buf[32];
  for (std::size_t i = 0; i < n_attrs; ++i) {
    std::snprintf(buf, sizeof buf, "attr_%03zu", i);
    attrs.emplace_back(buf);
  }
  for (std::size_t i = 0; i < n_objs; ++i) {
    std::snprintf(buf, sizeof buf, "obj_%03zu", i);
    objs.emplace_back(buf);
  }
  std::vector<Composition> comps;
  for (std::size_t a = 0; a < n_attrs; ++a)
    for (std::size_t o = 0; o < n_objs; ++o) comps.push_back({a, o});
  return build_space(std::move(attrs), std::move(objs), std::move(comps));
}

namespace {

template <typename F>
std::vector<std::size_t> collect(const SessionSpec& s, F field) {
  std::set<std::size_t> out;
  for (const auto* list : {&s.seen, &s.val, &s.unseen})
    for (const Composition& c : *list) out.insert(field(c));
  return {out.begin(), out.end()};
}

// Session in which each of n primitives is introduced.
std::vector<std::size_t> introduce(std::size_t n, std::size_t sessions, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> session_of(n, 0);
  if (sessions == 1) return session_of;
  const std::size_t later = sessions - 1;
  std::size_t share = n / (2 * later);
  std::size_t first = n - later * share;
  if (share == 0) first = n > later ? n - later : 1;
  std::size_t pos = first;
  for (std::size_t s = 1; s < sessions && pos < n; ++s) {
    const std::size_t take = share == 0 ? 1 : share;
    for (std::size_t k = 0; k < take && pos < n; ++k) session_of[order[pos++]] = s;
  }
  return session_of;
}

}  // namespace

std::vector<std::size_t> used_attrs(const SessionSpec& s) {
  return collect(s, [](const Composition& c) { return c.attr; });
}

std::vector<std::size_t> used_objs(const SessionSpec& s) {
  return collect(s, [](const Composition& c) { return c.obj; });
}

std::vector<SessionSpec> split_constrained(const CompositionSpace& space, std::size_t sessions,
                                           std::uint64_t seed, std::span<const double> seen_fraction) {
  if (sessions == 0) throw ConfigError("split needs at least one session");
  if (seen_fraction.size() != 1 && seen_fraction.size() != sessions) {
    throw ConfigError("seen_fraction needs 1 or " + std::to_string(sessions) + " entries, got " +
                      std::to_string(seen_fraction.size()));
  }
  for (double f : seen_fraction) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("seen fraction must lie in (0,1), got " + std::to_string(f));
  }
  std::mt19937_64 rng(derive_seed(seed, "split"));
  const auto attr_session = introduce(space.attributes().size(), sessions, rng);
  const auto obj_session = introduce(space.objects().size(), sessions, rng);

  std::vector<std::vector<Composition>> pool(sessions);
  for (const Composition& c : space.compositions()) {
    pool[std::max(attr_session[c.attr], obj_session[c.obj])].push_back(c);
  }

  std::vector<SessionSpec> specs(sessions);
  std::vector<bool> attr_seen_before(space.attributes().size(), false), obj_seen_before(space.objects().size(), false);
  for (std::size_t s = 0; s < sessions; ++s) {
    auto& comps = pool[s];
    if (comps.size() < 2) {
      throw InfeasibleError("session " + std::to_string(s) + " receives " + std::to_string(comps.size()) +
                            " compositions; at least one seen and one unseen are required");
    }
    std::shuffle(comps.begin(), comps.end(), rng);
    const double frac = seen_fraction.size() == 1 ? seen_fraction[0] : seen_fraction[s];
    const auto n = comps.size();
    const auto want = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(frac * n)), 1, n - 1);

    // Cover new primitives first, then fill in shuffled order.
    std::vector<bool> taken(n, false);
    std::vector<Composition> seen;
    std::unordered_set<std::size_t> covered_a, covered_o;
    for (std::size_t i = 0; i < n && seen.size() < want; ++i) {
      const Composition& c = comps[i];
      const bool new_a = !attr_seen_before[c.attr] && !covered_a.count(c.attr);
      const bool new_o = !obj_seen_before[c.obj] && !covered_o.count(c.obj);
      if (new_a || new_o) {
        taken[i] = true;
        seen.push_back(c);
        covered_a.insert(c.attr);
        covered_o.insert(c.obj);
      }
    }
    for (std::size_t i = 0; i < n && seen.size() < want; ++i) {
      if (!taken[i]) {
        taken[i] = true;
        seen.push_back(comps[i]);
      }
    }
    SessionSpec& spec = specs[s];
    spec.index = s;
    spec.seen = std::move(seen);
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) spec.unseen.push_back(comps[i]);
    std::sort(spec.seen.begin(), spec.seen.end());
    std::sort(spec.unseen.begin(), spec.unseen.end());
    for (std::size_t a : used_attrs(spec))
      if (!attr_seen_before[a]) spec.attrs.push_back(a);
    for (std::size_t o : used_objs(spec))
      if (!obj_seen_before[o]) spec.objs.push_back(o);
    for (std::size_t a : spec.attrs) attr_seen_before[a] = true;
    for (std::size_t o : spec.objs) obj_seen_before[o] = true;
  }
  return specs;
}

std::vector<SplitViolation> validate_splits(const CompositionSpace& space, std::span<const SessionSpec> specs) {
  std::vector<SplitViolation> out;
  if (specs.empty()) {
    out.push_back({SplitViolation::Kind::InvalidPrimitive, "no sessions"});
    return out;
  }
  std::unordered_map<Composition, std::size_t, CompositionHash> owner;
  std::vector<bool> attr_known(space.attributes().size(), false), obj_known(space.objects().size(), false);
  auto label = [&](const Composition& c) {
    if (c.attr < space.attributes().size() && c.obj < space.objects().size()) return "\"" + space.name(c) + "\"";
    return "(" + std::to_string(c.attr) + "," + std::to_string(c.obj) + ")";
  };
  for (const SessionSpec& s : specs) {
    const std::string sess = "session " + std::to_string(s.index);
    for (std::size_t a : s.attrs) {
      if (a >= attr_known.size()) {
        out.push_back({SplitViolation::Kind::InvalidPrimitive, sess + " lists unknown attribute index " + std::to_string(a)});
      } else {
        attr_known[a] = true;
      }
    }
    for (std::size_t o : s.objs) {
      if (o >= obj_known.size()) {
        out.push_back({SplitViolation::Kind::InvalidPrimitive, sess + " lists unknown object index " + std::to_string(o)});
      } else {
        obj_known[o] = true;
      }
    }
    std::unordered_map<Composition, const char*, CompositionHash> local;
    const std::pair<const std::vector<Composition>*, const char*> lists[] = {
        {&s.seen, "seen"}, {&s.val, "val"}, {&s.unseen, "unseen"}};
    for (const auto& [list, role] : lists) {
      for (const Composition& c : *list) {
        const bool in_range = c.attr < attr_known.size() && c.obj < obj_known.size();
        if (!in_range || !space.contains(c)) {
          out.push_back({SplitViolation::Kind::InvalidPrimitive, sess + " " + role + " pair " + label(c) + " is not in the space"});
          continue;
        }
        if (!attr_known[c.attr] || !obj_known[c.obj]) {
          out.push_back({SplitViolation::Kind::InvalidPrimitive,
                         sess + " " + role + " pair " + label(c) + " uses a primitive not introduced by this session or earlier"});
        }
        auto [it, fresh] = local.emplace(c, role);
        if (!fresh) {
          out.push_back({SplitViolation::Kind::IntraSession,
                         sess + " lists " + label(c) + " as both " + it->second + " and " + role});
          continue;
        }
        auto [prev, first] = owner.emplace(c, s.index);
        if (!first && prev->second != s.index) {
          out.push_back({SplitViolation::Kind::CrossSession, label(c) + " appears in session " +
                                                                 std::to_string(prev->second) + " and " + sess});
        }
      }
    }
  }
  return out;
}

std::uint64_t splits_digest(const CompositionSpace& space, std::span<const SessionSpec> specs) {
  std::uint64_t h = fnv1a64("splits");
  auto mix_text = [&](const std::string& t) { h = fnv1a64(t, h) * 31 + 7; };
  auto mix_num = [&](std::uint64_t v) { h = mix64(h ^ v); };
  for (const auto& a : space.attributes()) mix_text(a);
  mix_num(0xa11);
  for (const auto& o : space.objects()) mix_text(o);
  mix_num(0x0b1);
  for (const SessionSpec& s : specs) {
    mix_num(s.index);
    for (const auto* list : {&s.seen, &s.val, &s.unseen}) {
      mix_num(list->size());
      for (const Composition& c : *list) {
        mix_num(c.attr);
        mix_num(c.obj);
      }
    }
  }
  return h;
}

}  // namespace cczsl::world
