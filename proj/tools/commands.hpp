// Copyright 2026 The Torquill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace torquill::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;

struct CommandOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> gains;        // rad/s
  std::optional<std::vector<double>> power_sweep;  // W
  std::optional<std::filesystem::path> input;      // overrides fit.input
};

void cmd_budget(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log);
void cmd_cool(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log);
void cmd_simulate(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log);
void cmd_ringdown(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log);
void cmd_calibrate(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log);
void cmd_fit(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log);

/// Parses arguments, runs one subcommand and maps failures to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Applies TORQUILL_THREADS; returns false on a malformed value.
bool apply_thread_limit(const char* env_value, std::string& error);

}  // namespace torquill::app
