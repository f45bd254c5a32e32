// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cczsl/eval/metrics.hpp"

// Line-oriented prediction dump. Numbers are written with 17 significant
// digits so parsing restores every score bit for bit:
//
//   cczsl-predictions 1
//   candidates <digest> <n>
//   c <attr> <obj> <seen 0|1>          (n lines)
//   r <id> <attr> <obj> <digest> <attr_pred> <obj_pred> <score>...
//
// A dump may hold several candidate blocks; every record names its block by
// digest.
namespace cczsl::eval {

void write_dump(std::ostream& out, std::span<const PredictionRecord> records);
// SchemaError with the line number on malformed input.
std::vector<PredictionRecord> read_dump(std::istream& in);

}  // namespace cczsl::eval
