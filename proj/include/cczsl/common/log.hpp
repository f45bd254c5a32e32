// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace cczsl::log {

enum class Level { Quiet = 0, Notice = 1, Info = 2 };

void set_level(Level level);
Level level();

void notice(std::string_view message);
void info(std::string_view message);

}  // namespace cczsl::log
