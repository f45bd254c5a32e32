// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cczsl/cli/experiment.hpp"
#include "cczsl/continual/protocol.hpp"
#include "cczsl/eval/metrics.hpp"

namespace cczsl::cli {

// Artifacts written by run_experiment() into the output directory:
//   manifest.json            resolved config, seeds, split digest, versions
//   summary.json             per-session metrics and the forgetting matrix
//   forgetting.tsv           auc[i][t] table
//   metrics/session_<t>.json accumulated, current-session and per-slice reports
//   curves/session_<t>.tsv   accumulated bias-sweep points
//   dumps/session_<t>.txt    prediction dump of the accumulated evaluation
//   checkpoints/session_<t>.ckpt
// INCOMPLETE is created first and removed only after everything else is
// written; on failure it holds the error message.
inline constexpr const char* kIncompleteMarker = "INCOMPLETE";

// ConfigError when the directory already holds artifacts and `force` is
// false. With `force` the previous artifacts are removed first.
continual::ProtocolResult run_experiment(const ExperimentConfig& config, bool force);

// One metric compared across two runs; delta = a - b.
struct MetricDelta {
  std::string name;
  double a = 0.0, b = 0.0, delta = 0.0;
  bool lower_is_better = false;
  // true when a is better than b, false when worse or equal
  bool a_better() const { return lower_is_better ? delta < 0.0 : delta > 0.0; }
};

struct SessionDelta {
  std::size_t session = 0;
  std::vector<MetricDelta> metrics;
};

struct CompareReport {
  std::vector<SessionDelta> sessions;
  MetricDelta f_auc;
};

// Reads two completed run directories. IncomparableError when either run is
// incomplete or lacks a forgetting matrix, when the split digests differ or
// when the session counts differ.
CompareReport compare_runs(const std::string& dir_a, const std::string& dir_b);
void print_compare(std::ostream& out, const CompareReport& report, const std::string& a, const std::string& b);

// Prints per-session counts and every violation. Returns the violations.
std::vector<world::SplitViolation> validate_and_print(const LoadedSplits& splits, std::ostream& out);

// Recomputes the metrics of a prediction dump; JSON text of the report.
std::string eval_dump(const std::string& path, std::size_t session, bool with_curve);

// Shared JSON form of a report (also used inside summary.json).
std::string report_json(const eval::MetricsReport& report);

}  // namespace cczsl::cli
