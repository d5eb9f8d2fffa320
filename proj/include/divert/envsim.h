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

// Deterministic miniature order-management environment ("mini-orders").
//
// Tools and their transitions over the `orders` table:
//
//   lookup_order {order_id}          read-only; payload is the record as JSON.
//   cancel_order {order_id}          open -> cancelled. Any other status is a
//                                    domain error and leaves state unchanged.
//   apply_refund {order_id, amount}  refunded += amount, allowed while
//                                    refunded + amount <= amount of the order.
//                                    Status is not changed.
//   escalate {order_id, note?}       escalated "no" -> "yes"; repeat is an
//                                    error.
//
// Every error result leaves the state untouched.

#ifndef DIVERT_ENVSIM_H_
#define DIVERT_ENVSIM_H_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "divert/core.h"
#include "json.hpp"

namespace divert {

inline constexpr int kTaskSuiteSchemaVersion = 1;

struct EnvState {
  // table name -> record id -> record
  std::map<std::string, std::map<std::string, FieldMap>> tables;

  bool operator==(const EnvState&) const = default;
};

// Byte-stable serialization: keys are emitted sorted.
std::string EnvStateToJson(const EnvState& state);

struct FieldCheck {
  std::string table;
  std::string record_id;
  std::string field;
  Scalar equals;

  bool operator==(const FieldCheck&) const = default;
};

// Conjunction of field-equality checks.
struct EnvAssertion {
  std::vector<FieldCheck> checks;

  bool Holds(const EnvState& state) const;
  bool operator==(const EnvAssertion&) const = default;
};

struct Task {
  std::string task_id;
  std::string domain;
  std::string user_instructions;
  std::string purpose;
  EnvState initial_env;
  EnvAssertion expected_final;
  std::vector<std::string> tool_names;

  bool operator==(const Task&) const = default;
};

struct ToolResult {
  bool ok = false;
  std::string payload;
  bool is_error = true;

  bool operator==(const ToolResult&) const = default;
};

const std::vector<std::string>& RegisteredTools();
bool IsRegisteredTool(std::string_view name);

// Pure function of (state, call). Unknown tools and malformed arguments come
// back as error results with the state unchanged.
std::pair<EnvState, ToolResult> ExecuteTool(const EnvState& state,
                                            const ToolCall& call);

Outcome EvaluateSuccess(const Task& task, const EnvState& final_state,
                        TerminationReason termination_reason);
Outcome EvaluateSuccess(const Task& task, const EnvState& final_state,
                        const Trajectory& trajectory);

// Applies the tool calls recorded in `messages`, in order, to `initial`.
EnvState ReplayToolCalls(const EnvState& initial,
                         const std::vector<Message>& messages);

std::vector<Task> ParseTaskSuite(const nlohmann::json& document);
std::vector<Task> LoadTaskSuite(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const EnvState& v);
void from_json(const nlohmann::json& j, EnvState& v);
void to_json(nlohmann::json& j, const FieldCheck& v);
void from_json(const nlohmann::json& j, FieldCheck& v);
void to_json(nlohmann::json& j, const Task& v);

}  // namespace divert

#endif  // DIVERT_ENVSIM_H_
