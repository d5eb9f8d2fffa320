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

#ifndef DIVERT_EXECUTION_STATE_H_
#define DIVERT_EXECUTION_STATE_H_

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "divert/core.h"
#include "divert/envsim.h"

namespace divert {

// Everything needed to continue a conversation exactly where it stopped.
struct ExecutionState {
  Task task;
  EnvState env;
  std::vector<Message> messages;
  Role from_role = Role::kSystem;
  Role to_role = Role::kUser;
  // Consumed by the next user turn instead of calling the user simulator.
  std::optional<Message> pending_message;
  std::optional<Augmentation> pending_augmentation;
  std::int64_t step_count = 0;
  std::int64_t error_count = 0;
  bool done = false;
  std::optional<TerminationReason> termination_reason;
  std::int64_t seed = 0;
  // Tokens charged to this execution (a resumed branch starts from zero).
  TokenLedger ledger;
  Lineage lineage;
  // Opaque slots; stateless chat agents and simulators leave them empty.
  std::string agent_scratchpad;
  std::string user_context;
  std::optional<std::string> last_snapshot_id;

  bool operator==(const ExecutionState&) const = default;
};

struct Snapshot {
  std::string id;
  std::optional<std::string> parent_id;
  std::string iteration_label;
  std::int64_t step_count = 0;
  ExecutionState execution_state;
  std::int64_t seed = 0;
  std::string created_at;
  std::optional<Augmentation> augmentation;

  bool operator==(const Snapshot&) const = default;
};

// Portable directory name: "iteration_1_2_step_7".
std::string SnapshotDirName(std::string_view iteration_label, std::int64_t step);
// Name recorded in metadata: "iteration_1_2_step:7".
std::string CanonicalSnapshotName(std::string_view iteration_label, std::int64_t step);
std::string SnapshotId(std::string_view task_id, std::string_view iteration_label,
                       std::int64_t step);

// Receives a snapshot before every user turn. Save must be durable when it
// returns; implementations must accept concurrent saves to distinct paths.
class SnapshotSink {
 public:
  virtual ~SnapshotSink() = default;
  virtual std::string Save(const Snapshot& snapshot) = 0;
};

class MemorySnapshotSink : public SnapshotSink {
 public:
  std::string Save(const Snapshot& snapshot) override;
  std::vector<Snapshot> snapshots() const;

 private:
  mutable std::mutex mu_;
  std::vector<Snapshot> snapshots_;
};

}  // namespace divert

#endif  // DIVERT_EXECUTION_STATE_H_
