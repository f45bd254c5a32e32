// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cczsl/continual/config.hpp"
#include "cczsl/world/space.hpp"

namespace cczsl::cli {

inline constexpr const char* kCodeVersion = "cczsl 0.1.0";
inline constexpr int kManifestVersion = 1;

// Where the session splits come from.
struct SplitSource {
  enum class Kind { Table, Generated };
  Kind kind = Kind::Table;
  std::string dataset = "utzappos";  // table datasets
  std::string table_path;            // empty: the bundled table file
  std::size_t attrs = 16, objs = 12, sessions = 3;  // generated grid
  std::uint64_t seed = 0;
  std::vector<double> seen_fraction = {0.6};
};

struct Ablation {
  bool cskd = true, cal = true, opl = true, idl = true;
  model::CompFusion comp_fusion = model::CompFusion::TailOnly;
};

struct OutputOptions {
  std::string dir = "runs/default";
  bool dumps = true;
  bool checkpoints = true;
};

struct ExperimentConfig {
  SplitSource split;
  continual::TrainConfig train;  // world, optimisation, loss and inference settings
  Ablation ablation;
  OutputOptions output;

  // TrainConfig with the ablation switches applied (a disabled loss gets
  // weight 0). Validates the result.
  continual::TrainConfig resolved() const;
};

// Parses a JSON document. Sections: split, world, train, loss, inference,
// ablation, output. Missing keys keep their defaults. ConfigError names the
// dotted path of an unknown key or a value of the wrong type. A run manifest
// is accepted as well; its "config" member is used.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Applies "path=value" overrides. The path is dotted ("loss.lambda_opl") or a
// bare key that names exactly one field across sections ("lambda_opl"). The
// value is read as JSON, falling back to a plain string.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);

// Full config as JSON text, every field present. parse_config() of the
// result gives back an equal config.
std::string config_to_json(const ExperimentConfig& config, int indent = 2);

// "table:<dataset>" (bundled file), "table:<dataset>@<path>" or "generated".
void set_split_source(ExperimentConfig& config, const std::string& spec);

struct LoadedSplits {
  world::CompositionSpace space;
  std::vector<world::SessionSpec> sessions;
  std::string description;
};
LoadedSplits load_splits(const SplitSource& source);

}  // namespace cczsl::cli
