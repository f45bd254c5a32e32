// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/common/log.hpp"

#include <atomic>
#include <iostream>

namespace cczsl::log {
namespace {
std::atomic<Level> g_level{Level::Notice};
}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void notice(std::string_view message) {
  if (g_level.load() >= Level::Notice) std::clog << "[notice] " << message << '\n';
}

void info(std::string_view message) {
  if (g_level.load() >= Level::Info) std::clog << "[info] " << message << '\n';
}

}  // namespace cczsl::log
