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

// On-disk snapshot storage.
//
// Layout: <base>/<domain>/<model>/<task_id>/iteration_<label>_step_<Y>/
// holding state.bin and metadata.json. state.bin is
//
//   "DVST" | u32 version | payload | u64 FNV-1a of everything before it
//
// with all integers little-endian and strings length-prefixed (u64).
// metadata.json mirrors ids, labels and the dialogue for people, and is the
// only place the creation time is kept, so saving the same state twice is a
// no-op even when the clock moved.

#ifndef DIVERT_SNAPSHOTS_H_
#define DIVERT_SNAPSHOTS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "divert/execution_state.h"

namespace divert {

inline constexpr std::uint32_t kStateFormatVersion = 1;
inline constexpr std::string_view kStateFileName = "state.bin";
inline constexpr std::string_view kMetadataFileName = "metadata.json";

// Everything except created_at.
std::string EncodeSnapshot(const Snapshot& snapshot);
// Throws kMigration on a version other than kStateFormatVersion and
// kCorruption on any structural problem.
Snapshot DecodeSnapshot(std::string_view bytes);

nlohmann::json SnapshotMetadata(const Snapshot& snapshot);

// Called with (temp_dir, final_dir) after both files are written and before
// the rename publishes them. Tests throw from here to simulate a crash.
using BeforeRenameHook =
    std::function<void(const std::filesystem::path&, const std::filesystem::path&)>;

std::filesystem::path TaskSnapshotDir(const std::filesystem::path& base_dir,
                                      std::string_view domain, std::string_view model,
                                      std::string_view task_id);

// Atomic: files go to a sibling ".tmp-*" directory that is renamed into
// place. Saving byte-identical content again returns the same path; different
// content at an existing path throws kIntegrityError.
std::filesystem::path SaveSnapshot(const Snapshot& snapshot,
                                   const std::filesystem::path& base_dir,
                                   std::string_view domain, std::string_view model,
                                   std::string_view task_id,
                                   const BeforeRenameHook& before_rename = {});

Snapshot LoadSnapshot(const std::filesystem::path& dir);

struct SnapshotRef {
  std::int64_t step = 0;
  std::filesystem::path path;

  bool operator==(const SnapshotRef&) const = default;
};

struct TreeNode {
  std::string iteration_label;
  // Every step snapshot stored under this label, by ascending step.
  std::vector<SnapshotRef> snapshots;
  std::vector<TreeNode> children;  // by ascending child index

  bool operator==(const TreeNode&) const = default;
};

struct TreeDiagnostic {
  std::string entry;
  std::string message;

  bool operator==(const TreeDiagnostic&) const = default;
};

struct ExperimentTree {
  std::vector<TreeNode> roots;
  // Subtrees whose parent label has no snapshot directory.
  std::vector<TreeNode> orphans;
  std::vector<TreeDiagnostic> diagnostics;

  // label -> parent label ("" for roots), over roots and orphans.
  std::map<std::string, std::string> ParentMap() const;
  const TreeNode* Find(std::string_view label) const;
};

// Built from directory names only. A missing task directory yields an empty
// tree; temp directories left by interrupted saves are ignored.
ExperimentTree ListTree(const std::filesystem::path& base_dir, std::string_view domain,
                        std::string_view model, std::string_view task_id);
ExperimentTree ListTreeAt(const std::filesystem::path& task_dir);

// Parses "iteration_<label>_step_<Y>". Returns false for anything else.
bool ParseSnapshotDirName(std::string_view name, std::string* label, std::int64_t* step);

// Removes every snapshot of `label` and of its descendants. Returns the
// number of directories removed.
std::size_t PruneSnapshots(const std::filesystem::path& task_dir, std::string_view label);

// SnapshotSink writing through SaveSnapshot. Domain and task id come from the
// snapshot's task.
class SnapshotStore : public SnapshotSink {
 public:
  SnapshotStore(std::filesystem::path base_dir, std::string model)
      : base_dir_(std::move(base_dir)), model_(std::move(model)) {}

  std::string Save(const Snapshot& snapshot) override;

  const std::filesystem::path& base_dir() const { return base_dir_; }
  const std::string& model() const { return model_; }
  std::filesystem::path TaskDir(std::string_view domain, std::string_view task_id) const {
    return TaskSnapshotDir(base_dir_, domain, model_, task_id);
  }
  void set_before_rename(BeforeRenameHook hook) { before_rename_ = std::move(hook); }

 private:
  std::filesystem::path base_dir_;
  std::string model_;
  BeforeRenameHook before_rename_;
};

}  // namespace divert

#endif  // DIVERT_SNAPSHOTS_H_
