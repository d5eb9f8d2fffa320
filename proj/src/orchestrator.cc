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

#include "divert/orchestrator.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>

#include "divert/prompts.h"
#include "json.hpp"

namespace divert {

std::string SnapshotDirName(std::string_view iteration_label, std::int64_t step) {
  return "iteration_" + std::string(iteration_label) + "_step_" + std::to_string(step);
}

std::string CanonicalSnapshotName(std::string_view iteration_label, std::int64_t step) {
  return "iteration_" + std::string(iteration_label) + "_step:" + std::to_string(step);
}

std::string SnapshotId(std::string_view task_id, std::string_view iteration_label,
                       std::int64_t step) {
  return std::string(task_id) + "/" + SnapshotDirName(iteration_label, step);
}

std::string MemorySnapshotSink::Save(const Snapshot& snapshot) {
  std::lock_guard<std::mutex> lock(mu_);
  snapshots_.push_back(snapshot);
  return "mem://" + snapshot.id;
}

std::vector<Snapshot> MemorySnapshotSink::snapshots() const {
  std::lock_guard<std::mutex> lock(mu_);
  return snapshots_;
}

void RunConfig::Validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::kConfigError, "run." + field + " " + why);
  };
  if (!std::isfinite(agent_temperature) || agent_temperature < 0) {
    fail("agent_temperature", "must be finite and >= 0");
  }
  if (!std::isfinite(user_temperature) || user_temperature < 0) {
    fail("user_temperature", "must be finite and >= 0");
  }
  if (max_steps < 1) fail("max_steps", "must be positive");
  if (max_errors < 1) fail("max_errors", "must be positive");
  if (max_retries < 1) fail("max_retries", "must be positive");
}

std::string UtcTimestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Parses "<name> <json-args>" following the directive keyword.
ToolCall ParseDirective(std::string_view rest) {
  rest = Trim(rest);
  std::size_t space = rest.find_first_of(" \t");
  std::string_view name = rest.substr(0, space);
  if (name.empty()) throw Error(ErrorCode::kParseError, "missing tool name");
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') {
      throw Error(ErrorCode::kParseError, "invalid tool name '" + std::string(name) + "'");
    }
  }
  std::string_view args = space == std::string_view::npos ? "" : Trim(rest.substr(space));
  ToolCall call;
  call.name = std::string(name);
  if (args.empty()) return call;
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(args);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kParseError, "arguments are not valid JSON");
  }
  if (!parsed.is_object()) {
    throw Error(ErrorCode::kParseError, "arguments must be a JSON object");
  }
  for (const auto& [key, value] : parsed.items()) {
    call.arguments[key] = value.get<Scalar>();
  }
  return call;
}

void Finish(ExecutionState& state, TerminationReason reason) {
  state.done = true;
  state.termination_reason = reason;
}

void CheckBudgets(ExecutionState& state, const RunConfig& config) {
  if (state.done) return;
  if (state.error_count >= config.max_errors) {
    Finish(state, TerminationReason::kMaxErrors);
  } else if (state.step_count >= config.max_steps) {
    Finish(state, TerminationReason::kMaxSteps);
  }
}

void Charge(ExecutionState& state, RoleTag tag, const TokenUsage& usage) {
  if (TokenUsage* bucket = LedgerBucket(state.ledger, tag)) {
    *bucket = AddUsage(*bucket, usage);
  }
}

void Append(ExecutionState& state, Message message) {
  message.index = state.messages.size();
  state.from_role = message.role;
  state.messages.push_back(std::move(message));
  ++state.step_count;
}

void EmitSnapshot(ExecutionState& state, SnapshotSink* sink, const Clock& clock) {
  if (sink == nullptr) return;
  Snapshot snapshot;
  snapshot.iteration_label = state.lineage.iteration_label;
  snapshot.step_count = state.step_count;
  snapshot.seed = state.seed;
  snapshot.id = SnapshotId(state.task.task_id, snapshot.iteration_label, state.step_count);
  snapshot.parent_id = state.last_snapshot_id;
  snapshot.created_at = clock ? clock() : "";
  snapshot.augmentation = state.pending_augmentation;
  snapshot.execution_state = state;
  sink->Save(snapshot);
  state.last_snapshot_id = snapshot.id;
}

// Returns false when the provider gave up; the state is then finished.
bool Generate(ExecutionState& state, const ChatProvider& provider, ChatRequest request,
              ChatResult* result) {
  try {
    *result = ChatComplete(provider, request);
    Charge(state, request.role_tag, result->tokens);
    return true;
  } catch (const ProviderError& e) {
    Charge(state, request.role_tag, e.tokens());
    Finish(state, TerminationReason::kProviderError);
    return false;
  }
}

void UserTurn(ExecutionState& state, const RunConfig& config, const Providers& providers,
              SnapshotSink* sink, const Clock& clock) {
  EmitSnapshot(state, sink, clock);
  state.pending_augmentation.reset();
  Message message;
  if (state.pending_message) {
    message = *state.pending_message;
    message.role = Role::kUser;
    state.pending_message.reset();
  } else {
    ChatRequest request;
    request.messages = UserView(state.task, state.messages);
    request.temperature = config.user_temperature;
    request.max_retries = config.max_retries;
    request.role_tag = RoleTag::kUser;
    request.seed = static_cast<std::uint64_t>(state.seed);
    ChatResult result;
    if (!Generate(state, *providers.user, std::move(request), &result)) return;
    message.role = Role::kUser;
    message.content = std::move(result.content);
    message.tokens = result.tokens;
  }
  bool finished = message.content.find(kDoneToken) != std::string::npos;
  Append(state, std::move(message));
  if (finished) {
    Finish(state, TerminationReason::kTaskDone);
  } else {
    state.to_role = Role::kAgent;
  }
}

void AgentTurn(ExecutionState& state, const RunConfig& config, const Providers& providers) {
  ChatRequest request;
  request.messages = AgentView(state.task, state.messages);
  request.temperature = config.agent_temperature;
  request.max_retries = config.max_retries;
  request.role_tag = RoleTag::kAgent;
  request.seed = static_cast<std::uint64_t>(state.seed);
  ChatResult result;
  if (!Generate(state, *providers.agent, std::move(request), &result)) return;
  AgentReply reply = ParseAgentReply(result.content);
  Message message;
  message.role = Role::kAgent;
  message.content = reply.text;
  message.tool_call = reply.tool_call;
  message.tokens = result.tokens;
  Append(state, std::move(message));
  state.to_role = reply.tool_call || reply.malformed ? Role::kTool : Role::kUser;
}

void ToolTurn(ExecutionState& state) {
  const Message& call_message = state.messages.back();
  std::string tool_name;
  ToolResult result;
  if (call_message.tool_call) {
    const ToolCall& call = *call_message.tool_call;
    tool_name = call.name;
    const auto& allowed = state.task.tool_names;
    if (std::find(allowed.begin(), allowed.end(), call.name) == allowed.end()) {
      result = {false, "tool not found: '" + call.name + "'", true};
    } else {
      auto [next, r] = ExecuteTool(state.env, call);
      state.env = std::move(next);
      result = std::move(r);
    }
  } else {
    AgentReply reply = ParseAgentReply(call_message.content);
    tool_name = "invalid_tool_call";
    result = {false, "malformed tool call: " + reply.malformed.value_or("unparseable"), true};
  }
  Message message;
  message.role = Role::kTool;
  message.content = tool_name + (result.is_error ? " error" : " ok");
  message.tool_result = result.payload;
  Append(state, std::move(message));
  if (result.is_error) ++state.error_count;
  state.to_role = Role::kAgent;
}

}  // namespace

AgentReply ParseAgentReply(std::string_view content) {
  AgentReply reply;
  std::size_t pos = 0;
  std::string before;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::string_view line = content.substr(
        pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    std::string_view trimmed = Trim(line);
    if (trimmed == kToolDirective ||
        (trimmed.size() > kToolDirective.size() &&
         trimmed.substr(0, kToolDirective.size()) == kToolDirective &&
         std::isspace(static_cast<unsigned char>(trimmed[kToolDirective.size()])))) {
      try {
        reply.tool_call = ParseDirective(trimmed.substr(kToolDirective.size()));
        reply.text = std::string(Trim(before));
      } catch (const Error& e) {
        reply.malformed = e.what();
        reply.text = std::string(content);
      }
      return reply;
    }
    before.append(line);
    before.push_back('\n');
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  reply.text = std::string(content);
  return reply;
}

ExecutionState InitialState(const Task& task, std::int64_t seed,
                            std::string iteration_label) {
  ExecutionState state;
  state.task = task;
  state.env = task.initial_env;
  state.seed = seed;
  state.from_role = Role::kSystem;
  state.to_role = Role::kUser;
  state.lineage.iteration_label = std::move(iteration_label);
  return state;
}

ExecutionState RunToCompletion(ExecutionState state, const RunConfig& config,
                               const Providers& providers, SnapshotSink* sink,
                               const Clock& clock) {
  config.Validate();
  CheckBudgets(state, config);
  while (!state.done) {
    switch (state.to_role) {
      case Role::kUser:
        UserTurn(state, config, providers, sink, clock);
        break;
      case Role::kAgent:
        AgentTurn(state, config, providers);
        break;
      case Role::kTool:
        ToolTurn(state);
        break;
      case Role::kSystem:
        throw Error(ErrorCode::kInvalidState, "cannot route a turn to the system role");
    }
    CheckBudgets(state, config);
  }
  return state;
}

Trajectory TrajectoryFromState(const ExecutionState& state) {
  if (!state.done || !state.termination_reason) {
    throw Error(ErrorCode::kInvalidState, "execution has not terminated");
  }
  Trajectory t;
  t.task_id = state.task.task_id;
  t.seed = state.seed;
  t.messages = state.messages;
  t.outcome = EvaluateSuccess(state.task, state.env, *state.termination_reason);
  t.ledger = state.ledger;
  t.lineage = state.lineage;
  t.step_count = state.step_count;
  t.error_count = state.error_count;
  return t;
}

Trajectory RunRollout(const Task& task, const RunConfig& config, const Providers& providers,
                      SnapshotSink* sink, std::int64_t seed, std::string iteration_label,
                      const Clock& clock) {
  return TrajectoryFromState(RunToCompletion(
      InitialState(task, seed, std::move(iteration_label)), config, providers, sink, clock));
}

ExecutionState ResumeToCompletion(ExecutionState state, const RunConfig& config,
                                  const Providers& providers, SnapshotSink* sink,
                                  const Clock& clock) {
  if (state.done) {
    throw Error(ErrorCode::kInvalidState, "cannot resume a finished execution");
  }
  state.ledger = {};
  return RunToCompletion(std::move(state), config, providers, sink, clock);
}

Trajectory ResumeExecution(ExecutionState state, const RunConfig& config,
                           const Providers& providers, SnapshotSink* sink,
                           const Clock& clock) {
  return TrajectoryFromState(
      ResumeToCompletion(std::move(state), config, providers, sink, clock));
}

}  // namespace divert
