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

// Random values for property tests. Everything is driven by a caller-owned
// engine so failures reproduce from the seed.

#ifndef DIVERT_TESTS_GENERATORS_H_
#define DIVERT_TESTS_GENERATORS_H_

#include <random>
#include <string>
#include <vector>

#include "divert/core.h"
#include "divert/execution_state.h"

namespace divert::testing {

using Rng = std::mt19937_64;

inline std::size_t Below(Rng& rng, std::size_t n) { return n == 0 ? 0 : rng() % n; }

// Printable text with spaces, newlines and some multi-byte UTF-8.
inline std::string RandomText(Rng& rng, std::size_t max_len = 40) {
  static const std::vector<std::string> kPieces = {
      "a", "b", "Z", "7", " ", " ", "\n", "\t", "{", "\"", "\\", "é", "→", "O-1001", "###", ","};
  std::string out;
  std::size_t n = Below(rng, max_len + 1);
  for (std::size_t i = 0; i < n; ++i) out += kPieces[Below(rng, kPieces.size())];
  return out;
}

inline Scalar RandomScalar(Rng& rng) {
  switch (Below(rng, 3)) {
    case 0:
      return static_cast<std::int64_t>(rng());
    case 1:
      return std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
    default:
      return RandomText(rng, 8);
  }
}

inline FieldMap RandomFields(Rng& rng) {
  FieldMap m;
  for (std::size_t i = Below(rng, 4); i > 0; --i) m["f" + std::to_string(Below(rng, 9))] = RandomScalar(rng);
  return m;
}

inline TokenUsage RandomUsage(Rng& rng) { return {Below(rng, 5000), Below(rng, 5000)}; }

inline std::string RandomLabel(Rng& rng) {
  std::string label;
  for (std::size_t d = 1 + Below(rng, 3); d > 0; --d) {
    label = IterationChildLabel(label, 1 + static_cast<std::int64_t>(Below(rng, 12)));
  }
  return label;
}

inline Message RandomMessage(Rng& rng, std::size_t index) {
  Message m;
  m.index = index;
  m.role = static_cast<Role>(Below(rng, 4));
  m.content = RandomText(rng);
  if (m.role == Role::kAgent && Below(rng, 2)) m.tool_call = ToolCall{"t" + RandomText(rng, 3), RandomFields(rng)};
  if (m.role == Role::kTool) m.tool_result = RandomText(rng);
  m.tokens = RandomUsage(rng);
  return m;
}

inline Task RandomTask(Rng& rng) {
  Task t;
  t.task_id = "task-" + std::to_string(Below(rng, 1000));
  t.domain = "mini-orders";
  t.user_instructions = RandomText(rng);
  t.purpose = RandomText(rng);
  for (std::size_t i = Below(rng, 3); i > 0; --i) {
    t.initial_env.tables["orders"]["O-" + std::to_string(Below(rng, 100))] = RandomFields(rng);
  }
  for (std::size_t i = Below(rng, 3); i > 0; --i) {
    t.expected_final.checks.push_back({"orders", "O-1", "status", RandomScalar(rng)});
  }
  t.tool_names = {"lookup_order", "cancel_order"};
  return t;
}

inline std::optional<Augmentation> RandomAugmentation(Rng& rng) {
  if (Below(rng, 2) == 0) return std::nullopt;
  return Augmentation{RandomText(rng), RandomText(rng), Below(rng, 20), RandomText(rng),
                      RandomUsage(rng)};
}

inline Snapshot RandomSnapshot(Rng& rng) {
  ExecutionState s;
  s.task = RandomTask(rng);
  s.env = s.task.initial_env;
  if (Below(rng, 2)) s.env.tables["orders"]["O-x"] = RandomFields(rng);
  for (std::size_t i = 0, n = Below(rng, 8); i < n; ++i) s.messages.push_back(RandomMessage(rng, i));
  s.from_role = static_cast<Role>(Below(rng, 4));
  s.to_role = Role::kUser;
  if (Below(rng, 2)) s.pending_message = RandomMessage(rng, s.messages.size());
  s.pending_augmentation = RandomAugmentation(rng);
  s.step_count = static_cast<std::int64_t>(s.messages.size());
  s.error_count = static_cast<std::int64_t>(Below(rng, 10));
  s.done = false;
  if (Below(rng, 4) == 0) s.termination_reason = TerminationReason::kMaxErrors;
  s.seed = static_cast<std::int64_t>(rng());
  s.ledger = {RandomUsage(rng), RandomUsage(rng), RandomUsage(rng), RandomUsage(rng)};
  s.lineage.iteration_label = RandomLabel(rng);
  if (Below(rng, 2)) s.lineage.parent_label = "1";
  if (Below(rng, 2)) s.lineage.junction_index = Below(rng, 9);
  if (Below(rng, 2)) s.lineage.junction_reason = RandomText(rng);
  s.agent_scratchpad = RandomText(rng);
  s.user_context = RandomText(rng);
  if (Below(rng, 2)) s.last_snapshot_id = RandomText(rng, 10);

  Snapshot snap;
  snap.iteration_label = s.lineage.iteration_label;
  snap.step_count = s.step_count;
  snap.id = SnapshotId(s.task.task_id, snap.iteration_label, snap.step_count);
  if (Below(rng, 2)) snap.parent_id = SnapshotId(s.task.task_id, snap.iteration_label, 0);
  snap.seed = s.seed;
  snap.created_at = "2026-01-02T03:04:05Z";
  snap.augmentation = s.pending_augmentation;
  snap.execution_state = std::move(s);
  return snap;
}

}  // namespace divert::testing

#endif  // DIVERT_TESTS_GENERATORS_H_
