// Copyright 2026 The promptlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: one subcommand per experiment, plus manifests that
// chain subcommands.

#ifndef PROMPTLAB_CLI_HPP_
#define PROMPTLAB_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace promptlab {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,      // bad flags, schema violations
  kExitRuntime = 2,    // missing or corrupt inputs, numerical failure
  kExitAssertion = 3,  // the run finished but an acceptance check failed
};

/// Environment variable naming the backbone cache directory.
inline constexpr const char* kCacheEnv = "PROMPTLAB_CACHE";

struct ManifestStep {
  std::size_t line = 0;
  std::string subcommand;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> inputs;      // checkpoints read by the step
  std::map<std::string, std::string> options;     // extra --key value flags
};

/// Ordered steps. Output directories are unique and every checkpoint input
/// either exists or is produced by an earlier step.
struct ExperimentManifest {
  std::vector<ManifestStep> steps;
};

/// Line format: `<subcommand> key=value ...` with keys out (required), in,
/// baseline, config, seed, and any subcommand flag. '#' starts a comment.
/// Throws ConfigError naming the line on violations.
ExperimentManifest parse_manifest(const std::string& text);

/// Checkpoint a step writes, if any.
std::optional<std::filesystem::path> produced_checkpoint(const ManifestStep& step);

/// Command-line arguments for one manifest step.
std::vector<std::string> step_arguments(const ManifestStep& step);

/// Runs the CLI on args (without the program name). Returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace promptlab

#endif  // PROMPTLAB_CLI_HPP_
