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

#include "divert/pool_io.h"

#include <fstream>
#include <sstream>

namespace divert {

namespace fs = std::filesystem;

void WriteTextFile(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::kStorageError, "cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::kStorageError, "cannot write " + path.string());
}

std::string ReadTextFile(const fs::path& path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) throw Error(ErrorCode::kStorageError, path.string() + " is a directory");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <typename F>
void ForEachLine(const fs::path& path, F&& f) {
  std::istringstream in(ReadTextFile(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      f(line);
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaError,
                  path.filename().string() + " line " + std::to_string(number) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  path.filename().string() + " line " + std::to_string(number) + ": " + e.what());
    }
  }
}

}  // namespace

void WriteTrajectories(const fs::path& path, const std::vector<Trajectory>& pool) {
  std::string text;
  for (const Trajectory& t : pool) text += TrajectoryToJsonLine(t) + "\n";
  WriteTextFile(path, text);
}

std::vector<Trajectory> ReadTrajectories(const fs::path& path) {
  std::vector<Trajectory> pool;
  ForEachLine(path, [&](const std::string& line) { pool.push_back(TrajectoryFromJsonLine(line)); });
  return pool;
}

void WriteCandidateRecords(const fs::path& path, const std::vector<CandidateRecord>& records) {
  std::string text;
  for (const CandidateRecord& r : records) text += CandidateRecordToJson(r).dump() + "\n";
  WriteTextFile(path, text);
}

std::vector<CandidateRecord> ReadCandidateRecords(const fs::path& path) {
  std::vector<CandidateRecord> records;
  ForEachLine(path, [&](const std::string& line) {
    records.push_back(CandidateRecordFromJson(nlohmann::json::parse(line)));
  });
  return records;
}

}  // namespace divert
