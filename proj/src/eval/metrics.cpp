// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"

namespace cczsl::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Best score and its first position inside each candidate group.
struct GroupMax {
  double seen = -kInf, unseen = -kInf;
  std::size_t seen_at = 0, unseen_at = 0;
  bool has_seen = false, has_unseen = false;
};

GroupMax group_max(const PredictionRecord& r) {
  GroupMax g;
  const auto& seen = r.candidates->seen;
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    if (seen[i]) {
      if (!g.has_seen || r.scores[i] > g.seen) {
        g.seen = r.scores[i];
        g.seen_at = i;
        g.has_seen = true;
      }
    } else if (!g.has_unseen || r.scores[i] > g.unseen) {
      g.unseen = r.scores[i];
      g.unseen_at = i;
      g.has_unseen = true;
    }
  }
  return g;
}

// Per-record quantities the sweep needs.
struct Outcome {
  double gap;  // best seen - best unseen
  bool truth_seen;
  bool right_if_seen;
  bool right_if_unseen;
};

std::vector<Outcome> outcomes(std::span<const PredictionRecord> records) {
  if (records.empty()) throw DegenerateProtocolError("bias sweep over an empty record set");
  std::vector<Outcome> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const std::size_t truth = r.truth_position();
    const GroupMax g = group_max(r);
    if (!g.has_unseen) {
      throw DegenerateProtocolError("record " + std::to_string(r.sample_id) + " has no unseen candidate");
    }
    const double gap = g.has_seen ? g.seen - g.unseen : -kInf;
    out.push_back({gap, static_cast<bool>(r.candidates->seen[truth]), g.has_seen && g.seen_at == truth,
                   g.unseen_at == truth});
  }
  return out;
}

bool predicts_unseen(const Outcome& o, double bias) { return o.gap <= bias; }

SweepPoint point_at(std::span<const Outcome> os, double bias) {
  std::size_t n_seen = 0, n_unseen = 0, ok_seen = 0, ok_unseen = 0;
  for (const auto& o : os) {
    const bool right = predicts_unseen(o, bias) ? o.right_if_unseen : o.right_if_seen;
    if (o.truth_seen) {
      ++n_seen;
      ok_seen += right;
    } else {
      ++n_unseen;
      ok_unseen += right;
    }
  }
  return {bias, n_seen ? static_cast<double>(ok_seen) / n_seen : 0.0,
          n_unseen ? static_cast<double>(ok_unseen) / n_unseen : 0.0};
}

}  // namespace

void InferenceWeights::validate() const {
  for (double v : {lambda_c, lambda_a, lambda_o}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("inference weights must be finite and non-negative");
  }
  if (lambda_c == 0.0 && lambda_a == 0.0 && lambda_o == 0.0) throw ConfigError("inference weights are all zero");
}

std::uint64_t CandidateSet::digest() const {
  std::uint64_t h = fnv1a64("candidates");
  for (std::size_t i = 0; i < comps.size(); ++i) {
    h = mix64(h ^ mix64(comps[i].attr * 0x9e3779b97f4a7c15ULL + comps[i].obj));
    h = mix64(h ^ (seen[i] ? 0x51ULL : 0x0uLL));
  }
  return h;
}

CandidateSet make_candidates(std::vector<world::Composition> comps, std::vector<bool> seen) {
  if (comps.size() != seen.size()) throw ConsistencyError("candidate list and seen flags differ in length");
  if (comps.empty()) throw ConsistencyError("empty candidate list");
  return {std::move(comps), std::move(seen)};
}

std::size_t PredictionRecord::truth_position() const {
  if (!candidates) throw ConsistencyError("record " + std::to_string(sample_id) + " has no candidate set");
  if (scores.size() != candidates->comps.size()) {
    throw ConsistencyError("record " + std::to_string(sample_id) + " has " + std::to_string(scores.size()) +
                           " scores for " + std::to_string(candidates->comps.size()) + " candidates");
  }
  auto it = std::find(candidates->comps.begin(), candidates->comps.end(), truth);
  if (it == candidates->comps.end()) {
    throw ConsistencyError("record " + std::to_string(sample_id) + ": truth is not a candidate");
  }
  return static_cast<std::size_t>(it - candidates->comps.begin());
}

std::vector<double> combined_score(std::span<const double> p_c, std::span<const double> p_a,
                                   std::span<const double> p_o, std::span<const world::Composition> positions,
                                   const InferenceWeights& w) {
  if (p_c.size() != positions.size()) {
    throw DimensionError("combined_score: " + std::to_string(p_c.size()) + " composition probabilities for " +
                         std::to_string(positions.size()) + " candidates");
  }
  std::vector<double> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& c = positions[i];
    if (c.attr >= p_a.size() || c.obj >= p_o.size()) throw IndexError("combined_score: primitive out of range");
    out[i] = w.lambda_c * p_c[i] + w.lambda_a * p_a[c.attr] * w.lambda_o * p_o[c.obj];
  }
  return out;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw DimensionError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

BiasSweepCurve bias_sweep(std::span<const PredictionRecord> records) {
  const auto os = outcomes(records);
  std::vector<double> gaps;
  for (const auto& o : os) {
    if (std::isfinite(o.gap)) gaps.push_back(o.gap);
  }
  std::sort(gaps.begin(), gaps.end());
  gaps.erase(std::unique(gaps.begin(), gaps.end()), gaps.end());

  // Walk the samples in gap order; each critical value flips the samples
  // whose gap equals it from the seen group to the unseen group.
  std::vector<std::size_t> order(os.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return os[a].gap < os[b].gap; });

  std::size_t n_seen = 0, n_unseen = 0;
  long ok_seen = 0, ok_unseen = 0;
  std::size_t next = 0;
  for (const auto& o : os) {
    (o.truth_seen ? n_seen : n_unseen)++;
  }
  auto flip_through = [&](double bias) {
    for (; next < order.size() && os[order[next]].gap <= bias; ++next) {
      const auto& o = os[order[next]];
      const long delta = static_cast<long>(o.right_if_unseen) - static_cast<long>(o.right_if_seen);
      (o.truth_seen ? ok_seen : ok_unseen) += delta;
    }
  };
  for (const auto& o : os) {
    (o.truth_seen ? ok_seen : ok_unseen) += o.right_if_seen;
  }
  auto emit = [&](double bias) {
    return SweepPoint{bias, n_seen ? static_cast<double>(ok_seen) / n_seen : 0.0,
                      n_unseen ? static_cast<double>(ok_unseen) / n_unseen : 0.0};
  };

  BiasSweepCurve curve;
  curve.points.reserve(gaps.size() + 2);
  flip_through(-kInf);
  curve.points.push_back(emit(-kInf));
  for (double g : gaps) {
    flip_through(g);
    curve.points.push_back(emit(g));
  }
  flip_through(kInf);
  curve.points.push_back(emit(kInf));
  return curve;
}

SweepPoint accuracy_at(std::span<const PredictionRecord> records, double bias) {
  const auto os = outcomes(records);
  return point_at(os, bias);
}

double auc(const BiasSweepCurve& curve) {
  if (curve.points.size() < 2) throw DomainError("auc needs at least two curve points");
  std::vector<std::pair<double, double>> su;
  su.reserve(curve.points.size());
  for (const auto& p : curve.points) su.emplace_back(p.seen_acc, p.unseen_acc);
  // Equal seen accuracy: the higher unseen accuracy comes first, which is
  // the order along the sweep read from +inf down to -inf.
  std::sort(su.begin(), su.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  });
  double area = 0.0;
  for (std::size_t i = 1; i < su.size(); ++i) {
    area += (su[i].first - su[i - 1].first) * (su[i].second + su[i - 1].second) / 2.0;
  }
  return area;
}

BestPoint best_hm(const BiasSweepCurve& curve) {
  if (curve.points.empty()) throw DomainError("best_hm of an empty curve");
  BestPoint b;
  for (const auto& p : curve.points) {
    b.best_seen = std::max(b.best_seen, p.seen_acc);
    b.best_unseen = std::max(b.best_unseen, p.unseen_acc);
    const double s = p.seen_acc + p.unseen_acc;
    if (s > 0.0) b.hm = std::max(b.hm, 2.0 * p.seen_acc * p.unseen_acc / s);
  }
  return b;
}

PrimitiveAccuracy primitive_acc(std::span<const PredictionRecord> records) {
  PrimitiveAccuracy acc;
  if (records.empty()) return acc;
  const auto os = outcomes(records);
  std::size_t a = 0, o = 0, c = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    a += records[i].attr_pred == records[i].truth.attr;
    o += records[i].obj_pred == records[i].truth.obj;
    // The unbiased prediction is correct exactly when it lands on the truth,
    // i.e. matches both primitives.
    c += predicts_unseen(os[i], 0.0) ? os[i].right_if_unseen : os[i].right_if_seen;
  }
  const double n = static_cast<double>(records.size());
  return {a / n, o / n, c / n};
}

std::string to_string(Scope scope) {
  switch (scope) {
    case Scope::ZSEval: return "zseval";
    case Scope::CZSEval: return "czseval";
    case Scope::Slice: return "slice";
  }
  return "czseval";
}

MetricsReport evaluate(std::span<const PredictionRecord> records, std::size_t session, Scope scope,
                       std::size_t slice) {
  MetricsReport r;
  r.session = session;
  r.scope = scope;
  r.slice = slice;
  r.records = records.size();
  const auto curve = bias_sweep(records);
  r.auc = auc(curve);
  const auto best = best_hm(curve);
  r.best_seen = best.best_seen;
  r.best_unseen = best.best_unseen;
  r.hm = best.hm;
  const auto prim = primitive_acc(records);
  r.attr_acc = prim.attr;
  r.obj_acc = prim.obj;
  r.comp_acc = prim.comp;
  const auto zero = accuracy_at(records, 0.0);
  r.unbiased_seen = zero.seen_acc;
  r.unbiased_unseen = zero.unseen_acc;
  return r;
}

std::vector<PredictionRecord> czs_accumulate(std::span<const std::vector<PredictionRecord>> sets) {
  std::vector<PredictionRecord> out;
  std::optional<std::uint64_t> digest;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (const auto& r : sets[s]) {
      r.truth_position();
      const std::uint64_t d = r.candidates->digest();
      if (!digest) digest = d;
      if (*digest != d) {
        throw ConsistencyError("record set " + std::to_string(s) + " was scored over a different candidate space");
      }
      out.push_back(r);
    }
  }
  return out;
}

ForgettingMatrix forgetting(const std::vector<std::vector<std::optional<double>>>& auc, std::size_t T) {
  if (T == 0) throw CompletenessError("forgetting needs at least one session");
  if (auc.size() < T) throw CompletenessError("forgetting matrix has " + std::to_string(auc.size()) + " rows, need " +
                                              std::to_string(T));
  ForgettingMatrix f;
  f.auc.assign(T, std::vector<std::optional<double>>(T));
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t t = i; t < T; ++t) {
      if (t >= auc[i].size() || !auc[i][t]) {
        throw CompletenessError("forgetting matrix entry auc[" + std::to_string(i) + "][" + std::to_string(t) +
                                "] is missing");
      }
      f.auc[i][t] = auc[i][t];
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    double s = 0.0;
    for (std::size_t t = i; t < T; ++t) s += std::fabs(*f.auc[i][i] - *f.auc[i][t]);
    f.per_set.push_back(s / static_cast<double>(T - i));
    total += f.per_set.back();
  }
  f.f_auc = total / static_cast<double>(T);
  return f;
}

}  // namespace cczsl::eval
