// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cczsl/world/space.hpp"

namespace cczsl::eval {

// Weights of the three branch probabilities in the inference score.
struct InferenceWeights {
  double lambda_c = 1.0;
  double lambda_a = 1.0;
  double lambda_o = 1.0;

  // ConfigError for a negative or non-finite weight, or all weights zero.
  void validate() const;
};

// Ordered candidate compositions of one evaluation, each flagged seen or
// unseen for the calibration sweep.
struct CandidateSet {
  std::vector<world::Composition> comps;
  std::vector<bool> seen;

  std::uint64_t digest() const;
};

CandidateSet make_candidates(std::vector<world::Composition> comps, std::vector<bool> seen);

struct PredictionRecord {
  std::uint64_t sample_id = 0;
  world::Composition truth;
  std::shared_ptr<const CandidateSet> candidates;
  std::vector<double> scores;  // one per candidate
  std::size_t attr_pred = 0;   // primitive indices of the branch argmaxes
  std::size_t obj_pred = 0;

  // Position of the truth among the candidates. ConsistencyError if the
  // record is malformed (truth missing, score count mismatch).
  std::size_t truth_position() const;
};

// score(c) = l_c*p_c[c] + l_a*p_a[a] * l_o*p_o[o] for every candidate.
// `positions[c]` holds the rows of a and o in p_a and p_o.
std::vector<double> combined_score(std::span<const double> p_c, std::span<const double> p_a,
                                   std::span<const double> p_o, std::span<const world::Composition> positions,
                                   const InferenceWeights& w);

// First index of the largest value.
std::size_t argmax(std::span<const double> v);

struct SweepPoint {
  double bias = 0.0;
  double seen_acc = 0.0;
  double unseen_acc = 0.0;
};

struct BiasSweepCurve {
  std::vector<SweepPoint> points;  // bias ascending, -inf first and +inf last
};

// Adds a bias to every unseen candidate score. With gap = best seen score -
// best unseen score, a sample is predicted from the unseen group when
// bias >= gap, so a tie between the groups goes to the unseen candidate;
// ties inside a group go to the earlier candidate. The sweep visits -inf, every distinct per-sample gap (best seen - best
// unseen) and +inf. Accuracies are over samples whose truth is seen
// (resp. unseen); an empty group scores 0. DegenerateProtocolError when
// there are no records or no unseen candidates.
BiasSweepCurve bias_sweep(std::span<const PredictionRecord> records);

// (seen, unseen) accuracy at a single bias.
SweepPoint accuracy_at(std::span<const PredictionRecord> records, double bias);

// Trapezoidal area under unseen accuracy as a function of seen accuracy,
// after sorting the points by seen accuracy ascending, unseen accuracy
// descending among equal seen values (the sweep path). DomainError for fewer than
// two points.
double auc(const BiasSweepCurve& curve);

struct BestPoint {
  double best_seen = 0.0;
  double best_unseen = 0.0;
  double hm = 0.0;
};
BestPoint best_hm(const BiasSweepCurve& curve);

struct PrimitiveAccuracy {
  double attr = 0.0;
  double obj = 0.0;
  double comp = 0.0;  // unbiased argmax matches both primitives
};
PrimitiveAccuracy primitive_acc(std::span<const PredictionRecord> records);

enum class Scope { ZSEval, CZSEval, Slice };
std::string to_string(Scope scope);

struct MetricsReport {
  std::size_t session = 0;
  Scope scope = Scope::CZSEval;
  std::size_t slice = 0;  // source session for Scope::Slice
  std::size_t records = 0;
  double auc = 0.0;
  double best_seen = 0.0;
  double best_unseen = 0.0;
  double hm = 0.0;
  double attr_acc = 0.0;
  double obj_acc = 0.0;
  double comp_acc = 0.0;
  double unbiased_seen = 0.0;  // accuracies at bias 0
  double unbiased_unseen = 0.0;
};

MetricsReport evaluate(std::span<const PredictionRecord> records, std::size_t session, Scope scope,
                       std::size_t slice = 0);

// Union of record sets scored by the same model over the same candidates.
// ConsistencyError when candidate sets differ.
std::vector<PredictionRecord> czs_accumulate(std::span<const std::vector<PredictionRecord>> sets);

struct ForgettingMatrix {
  // auc[i][t] for 0 <= i <= t < T; entries with t < i are absent.
  std::vector<std::vector<std::optional<double>>> auc;
  std::vector<double> per_set;  // F^i
  double f_auc = 0.0;
  static constexpr bool lower_is_better = true;
};

// F^i = mean over t in [i, T) of |auc[i][i] - auc[i][t]|, F_AUC = mean of
// F^i over i < T. CompletenessError names the first missing entry.
ForgettingMatrix forgetting(const std::vector<std::vector<std::optional<double>>>& auc, std::size_t T);

}  // namespace cczsl::eval
