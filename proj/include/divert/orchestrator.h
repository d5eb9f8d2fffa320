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

// Runs one user/agent/environment conversation to termination.
//
// Every appended message is one step (a role transition). The loop routes
//   user  -> agent
//   agent -> tool   when the reply carries a TOOL directive (valid or not)
//   agent -> user   otherwise
//   tool  -> agent
// and stops on ###DONE### from the user, on max_errors tool/format errors,
// on max_steps steps, or when a provider exhausts its retries. A snapshot is
// handed to the sink immediately before each user turn is produced.

#ifndef DIVERT_ORCHESTRATOR_H_
#define DIVERT_ORCHESTRATOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "divert/core.h"
#include "divert/envsim.h"
#include "divert/execution_state.h"
#include "divert/providers.h"

namespace divert {

struct RunConfig {
  std::int64_t seed = 42;
  double agent_temperature = 0.0;
  double user_temperature = 0.7;
  std::int64_t max_steps = 100;
  std::int64_t max_errors = 10;
  int max_retries = 3;

  // Throws kConfigError naming the offending field.
  void Validate() const;
  bool operator==(const RunConfig&) const = default;
};

struct Providers {
  std::shared_ptr<const ChatProvider> agent;
  std::shared_ptr<const ChatProvider> user;
  // Junction chooser and candidate generator.
  std::shared_ptr<const ChatProvider> framework;
  std::shared_ptr<const Embedder> embedder;
};

using Clock = std::function<std::string()>;

// ISO-8601 UTC, second resolution.
std::string UtcTimestamp();

struct AgentReply {
  std::string text;
  std::optional<ToolCall> tool_call;
  // Set when a TOOL directive is present but cannot be parsed.
  std::optional<std::string> malformed;
};

// Splits an agent completion into visible text and the first
// `TOOL <name> <json-args>` line.
AgentReply ParseAgentReply(std::string_view content);

ExecutionState InitialState(const Task& task, std::int64_t seed,
                            std::string iteration_label);

// Drives `state` until it is done and returns the final state. `sink` may be
// null.
ExecutionState RunToCompletion(ExecutionState state, const RunConfig& config,
                               const Providers& providers, SnapshotSink* sink,
                               const Clock& clock = UtcTimestamp);

Trajectory TrajectoryFromState(const ExecutionState& state);

Trajectory RunRollout(const Task& task, const RunConfig& config,
                      const Providers& providers, SnapshotSink* sink,
                      std::int64_t seed, std::string iteration_label,
                      const Clock& clock = UtcTimestamp);

// Continues a restored state. The ledger restarts from zero so only newly
// generated turns are charged. Throws kInvalidState when `state.done`.
ExecutionState ResumeToCompletion(ExecutionState state, const RunConfig& config,
                                  const Providers& providers, SnapshotSink* sink,
                                  const Clock& clock = UtcTimestamp);
Trajectory ResumeExecution(ExecutionState state, const RunConfig& config,
                           const Providers& providers, SnapshotSink* sink,
                           const Clock& clock = UtcTimestamp);

}  // namespace divert

#endif  // DIVERT_ORCHESTRATOR_H_
