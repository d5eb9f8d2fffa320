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

// Pool directory files: one JSON object per line, in creation order.

#ifndef DIVERT_POOL_IO_H_
#define DIVERT_POOL_IO_H_

#include <filesystem>
#include <string_view>
#include <vector>

#include "divert/core.h"
#include "divert/divert.h"

namespace divert {

inline constexpr std::string_view kTrajectoriesFile = "trajectories.jsonl";
inline constexpr std::string_view kCandidatesFile = "candidates.jsonl";
inline constexpr std::string_view kRunReportFile = "run_report.json";
inline constexpr std::string_view kManifestFile = "manifest.json";

// Throws kStorageError on I/O failure.
void WriteTextFile(const std::filesystem::path& path, std::string_view text);
std::string ReadTextFile(const std::filesystem::path& path);

void WriteTrajectories(const std::filesystem::path& path, const std::vector<Trajectory>& pool);
// Throws kSchemaError naming the offending line.
std::vector<Trajectory> ReadTrajectories(const std::filesystem::path& path);

void WriteCandidateRecords(const std::filesystem::path& path,
                           const std::vector<CandidateRecord>& records);
std::vector<CandidateRecord> ReadCandidateRecords(const std::filesystem::path& path);

}  // namespace divert

#endif  // DIVERT_POOL_IO_H_
