// Copyright 2026 The Divert Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: configuration loading, provider wiring, and the
// run / divert / analyze / inspect / prune subcommands.
//
// A configuration is one JSON document. Relative suite_path and base_dir are
// resolved against the config file's directory; output_dir against the
// working directory. Only the API key comes from the environment.

#ifndef DIVERT_CLI_H_
#define DIVERT_CLI_H_

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "divert/divert.h"
#include "divert/mock_world.h"
#include "divert/orchestrator.h"
#include "json.hpp"

namespace divert {

inline constexpr char kDivertVersion[] = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRunError = 1;
inline constexpr int kExitUsage = 2;

struct ProviderConfig {
  std::string kind = "mock";  // "mock" or "http"
  std::string endpoint;
  std::string agent_model = "mock-agent";
  std::string user_model = "mock-user";
  std::string framework_model = "mock-framework";
  std::string embedding_model = "mock-embedding";
  std::size_t embedding_dimension = 64;
  int timeout_seconds = 60;

  // kind == "mock" only.
  std::uint64_t mock_seed = 42;
  UserStyle user_style = UserStyle::kCooperative;
  std::map<RoleTag, ChargingRule> charging;
};

struct CliConfig {
  int schema_version = kConfigSchemaVersion;
  // As written in the document; kept for the manifest.
  std::string suite_path;
  std::string base_dir;  // empty -> <output_dir>/snapshots
  std::string output_dir = "out";
  // Directory the relative paths above are resolved against.
  std::filesystem::path config_dir;

  ProviderConfig provider;
  RunConfig run;
  DivertBudget budget;
  Ablation ablation;
  std::size_t parallel = 1;

  std::filesystem::path ResolvedSuitePath() const;
  std::filesystem::path ResolvedOutputDir() const;
  std::filesystem::path ResolvedBaseDir() const;
};

// Throws kConfigError naming the offending field, e.g. "budget.rollouts".
// Unknown keys are rejected.
CliConfig ParseCliConfig(const nlohmann::json& document,
                         const std::filesystem::path& config_dir);
CliConfig LoadCliConfig(const std::filesystem::path& path);
// Canonical form used for the manifest and its hash. Round-trips through
// ParseCliConfig.
nlohmann::json CliConfigToJson(const CliConfig& config);
std::string ConfigHash(const CliConfig& config);

Providers MakeProviders(const ProviderConfig& config);

nlohmann::json BuildManifest(const CliConfig& config, std::string_view command,
                             const std::vector<Trajectory>& pool,
                             const std::vector<CandidateRecord>& candidates,
                             const RunReport& report);

// The analysis file set written by `analyze`.
inline constexpr char kMetricsCsv[] = "metrics.csv";
inline constexpr char kCoverageCsv[] = "coverage.csv";
inline constexpr char kPrefixCsv[] = "prefix.csv";
inline constexpr char kDiversityCsv[] = "diversity.csv";
inline constexpr char kSummaryFile[] = "summary.json";

// Entry point; returns the process exit code.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace divert

#endif  // DIVERT_CLI_H_
