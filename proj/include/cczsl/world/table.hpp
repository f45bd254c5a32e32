// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cczsl/world/space.hpp"

namespace cczsl::world {

struct TableSplits {
  std::string dataset;
  CompositionSpace space;
  std::vector<SessionSpec> sessions;
};

// Reads one dataset from a split file:
//   {"format_version": 1,
//    "datasets": {"<name>": {"sessions": [
//       {"counts": {"attrs": n, "objs": n, "seen": n, "val": n, "unseen": n},
//        "attrs": [names], "objs": [names],
//        "seen": [[attr, obj], ...], "val": [...], "unseen": [...]}, ...]}}}
// Session attrs/objs list the primitives introduced by that session. The
// space is the union of all listed primitives and pairs, in file order.
// SchemaError on malformed content or declared/listed count mismatch.
TableSplits load_table_splits(const std::string& path, const std::string& dataset);

// Location of the split file shipped with the sources.
std::string bundled_table_path();

}  // namespace cczsl::world
