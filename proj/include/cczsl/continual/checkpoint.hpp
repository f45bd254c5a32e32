// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cczsl/model/model.hpp"

namespace cczsl::continual {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::size_t session = 0;
  model::ModelState state;
  std::uint64_t world_seed = 0;
  std::string config;  // echo of the run configuration
  std::vector<std::pair<std::string, double>> metrics;
};

// Binary layout: "CCZSLCKP", u32 version, named fields (u32 name length,
// name, u8 kind, u64 payload length, payload), then an FNV-1a checksum of
// everything before it. Doubles are stored as raw little-endian bits.
std::string serialize_checkpoint(const Checkpoint& ckpt);
// IntegrityError naming the offending field on any inconsistency; nothing
// is returned in that case.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cczsl::continual
