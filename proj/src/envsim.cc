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

#include "divert/envsim.h"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace divert {

namespace {

constexpr char kOrders[] = "orders";

ToolResult Ok(std::string payload) { return {true, std::move(payload), false}; }
ToolResult Fail(std::string payload) { return {false, std::move(payload), true}; }

const std::string* StringArg(const ToolCall& call, const std::string& key) {
  auto it = call.arguments.find(key);
  if (it == call.arguments.end()) return nullptr;
  return std::get_if<std::string>(&it->second);
}

const std::int64_t* IntArg(const ToolCall& call, const std::string& key) {
  auto it = call.arguments.find(key);
  if (it == call.arguments.end()) return nullptr;
  return std::get_if<std::int64_t>(&it->second);
}

std::int64_t IntField(const FieldMap& record, const std::string& key) {
  auto it = record.find(key);
  if (it == record.end()) return 0;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
  return 0;
}

std::string StringField(const FieldMap& record, const std::string& key) {
  auto it = record.find(key);
  if (it == record.end()) return "";
  return ScalarToString(it->second);
}

// Resolves the order named by `order_id`; null on argument or lookup failure
// with `error` filled in.
const FieldMap* FindOrder(const EnvState& state, const ToolCall& call,
                          std::string* order_id, ToolResult* error) {
  const std::string* id = StringArg(call, "order_id");
  if (id == nullptr) {
    *error = Fail("argument error: " + call.name + " requires string order_id");
    return nullptr;
  }
  *order_id = *id;
  auto table = state.tables.find(kOrders);
  if (table == state.tables.end()) {
    *error = Fail("order " + *id + " not found");
    return nullptr;
  }
  auto record = table->second.find(*id);
  if (record == table->second.end()) {
    *error = Fail("order " + *id + " not found");
    return nullptr;
  }
  return &record->second;
}

std::pair<EnvState, ToolResult> LookupOrder(const EnvState& state,
                                            const ToolCall& call) {
  std::string id;
  ToolResult error;
  const FieldMap* order = FindOrder(state, call, &id, &error);
  if (order == nullptr) return {state, error};
  nlohmann::json payload = *order;
  payload["id"] = id;
  return {state, Ok(payload.dump())};
}

std::pair<EnvState, ToolResult> CancelOrder(const EnvState& state,
                                            const ToolCall& call) {
  std::string id;
  ToolResult error;
  const FieldMap* order = FindOrder(state, call, &id, &error);
  if (order == nullptr) return {state, error};
  std::string status = StringField(*order, "status");
  if (status == "cancelled") {
    return {state, Fail("order " + id + " is already cancelled")};
  }
  if (status != "open") {
    return {state, Fail("order " + id + " is " + status + " and cannot be cancelled")};
  }
  EnvState next = state;
  next.tables[kOrders][id]["status"] = std::string("cancelled");
  return {std::move(next), Ok("order " + id + " cancelled")};
}

std::pair<EnvState, ToolResult> ApplyRefund(const EnvState& state,
                                            const ToolCall& call) {
  std::string id;
  ToolResult error;
  const FieldMap* order = FindOrder(state, call, &id, &error);
  if (order == nullptr) return {state, error};
  const std::int64_t* amount = IntArg(call, "amount");
  if (amount == nullptr || *amount <= 0) {
    return {state, Fail("argument error: apply_refund requires positive integer amount")};
  }
  std::int64_t refunded = IntField(*order, "refunded");
  std::int64_t total = IntField(*order, "amount");
  if (refunded + *amount > total) {
    return {state, Fail("refund of " + std::to_string(*amount) + " exceeds the " +
                            std::to_string(total - refunded) +
                            " remaining on order " + id)};
  }
  EnvState next = state;
  next.tables[kOrders][id]["refunded"] = refunded + *amount;
  return {std::move(next),
          Ok("refunded " + std::to_string(*amount) + " on order " + id)};
}

std::pair<EnvState, ToolResult> Escalate(const EnvState& state,
                                         const ToolCall& call) {
  std::string id;
  ToolResult error;
  const FieldMap* order = FindOrder(state, call, &id, &error);
  if (order == nullptr) return {state, error};
  if (StringField(*order, "escalated") == "yes") {
    return {state, Fail("order " + id + " is already escalated")};
  }
  EnvState next = state;
  next.tables[kOrders][id]["escalated"] = std::string("yes");
  return {std::move(next), Ok("order " + id + " escalated")};
}

bool IsSafeId(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '_';
  });
}

}  // namespace

std::string EnvStateToJson(const EnvState& state) {
  return nlohmann::json(state).dump();
}

bool EnvAssertion::Holds(const EnvState& state) const {
  for (const FieldCheck& check : checks) {
    auto table = state.tables.find(check.table);
    if (table == state.tables.end()) return false;
    auto record = table->second.find(check.record_id);
    if (record == table->second.end()) return false;
    auto field = record->second.find(check.field);
    if (field == record->second.end() || field->second != check.equals) {
      return false;
    }
  }
  return true;
}

const std::vector<std::string>& RegisteredTools() {
  static const std::vector<std::string> kTools = {
      "lookup_order", "cancel_order", "apply_refund", "escalate"};
  return kTools;
}

bool IsRegisteredTool(std::string_view name) {
  const auto& tools = RegisteredTools();
  return std::find(tools.begin(), tools.end(), name) != tools.end();
}

std::pair<EnvState, ToolResult> ExecuteTool(const EnvState& state,
                                            const ToolCall& call) {
  if (call.name == "lookup_order") return LookupOrder(state, call);
  if (call.name == "cancel_order") return CancelOrder(state, call);
  if (call.name == "apply_refund") return ApplyRefund(state, call);
  if (call.name == "escalate") return Escalate(state, call);
  return {state, Fail("tool not found: '" + call.name + "'")};
}

Outcome EvaluateSuccess(const Task& task, const EnvState& final_state,
                        TerminationReason termination_reason) {
  if (termination_reason != TerminationReason::kTaskDone) {
    return {OutcomeStatus::kIncomplete, termination_reason};
  }
  return {task.expected_final.Holds(final_state) ? OutcomeStatus::kSuccess
                                                 : OutcomeStatus::kFailure,
          termination_reason};
}

Outcome EvaluateSuccess(const Task& task, const EnvState& final_state,
                        const Trajectory& trajectory) {
  return EvaluateSuccess(task, final_state, trajectory.outcome.termination_reason);
}

EnvState ReplayToolCalls(const EnvState& initial,
                         const std::vector<Message>& messages) {
  EnvState state = initial;
  for (const Message& m : messages) {
    if (m.role == Role::kAgent && m.tool_call) {
      state = ExecuteTool(state, *m.tool_call).first;
    }
  }
  return state;
}

void to_json(nlohmann::json& j, const EnvState& v) { j = v.tables; }

void from_json(const nlohmann::json& j, EnvState& v) {
  v.tables = j.get<std::map<std::string, std::map<std::string, FieldMap>>>();
}

void to_json(nlohmann::json& j, const FieldCheck& v) {
  j = {{"table", v.table}, {"id", v.record_id}, {"field", v.field}, {"equals", v.equals}};
}

void from_json(const nlohmann::json& j, FieldCheck& v) {
  v.table = j.at("table").get<std::string>();
  v.record_id = j.at("id").get<std::string>();
  v.field = j.at("field").get<std::string>();
  v.equals = j.at("equals").get<Scalar>();
}

void to_json(nlohmann::json& j, const Task& v) {
  j = {{"task_id", v.task_id},
       {"domain", v.domain},
       {"user_instructions", v.user_instructions},
       {"purpose", v.purpose},
       {"initial_env", v.initial_env},
       {"expected_final", v.expected_final.checks},
       {"tool_names", v.tool_names}};
}

std::vector<Task> ParseTaskSuite(const nlohmann::json& document) {
  std::string prefix = "task suite";
  if (!document.is_object() || !document.contains("schema_version")) {
    throw Error(ErrorCode::kSchemaError, prefix + ": missing schema_version");
  }
  const auto& version = document["schema_version"];
  if (!version.is_number_integer() || version.get<int>() != kTaskSuiteSchemaVersion) {
    throw Error(ErrorCode::kSchemaError,
                prefix + " schema_version " + version.dump() + " not recognized (expected " +
                    std::to_string(kTaskSuiteSchemaVersion) + ")");
  }
  prefix += " v" + std::to_string(kTaskSuiteSchemaVersion);
  if (!document.contains("tasks") || !document["tasks"].is_array()) {
    throw Error(ErrorCode::kSchemaError, prefix + ": 'tasks' must be an array");
  }

  std::vector<Task> tasks;
  for (std::size_t i = 0; i < document["tasks"].size(); ++i) {
    const auto& entry = document["tasks"][i];
    std::string id = entry.is_object() && entry.contains("task_id") &&
                             entry["task_id"].is_string()
                         ? entry["task_id"].get<std::string>()
                         : "#" + std::to_string(i);
    try {
      Task task;
      task.task_id = entry.at("task_id").get<std::string>();
      task.domain = entry.at("domain").get<std::string>();
      task.user_instructions = entry.at("user_instructions").get<std::string>();
      task.purpose = entry.at("purpose").get<std::string>();
      task.initial_env = entry.at("initial_env").get<EnvState>();
      task.expected_final.checks =
          entry.at("expected_final").get<std::vector<FieldCheck>>();
      task.tool_names = entry.at("tool_names").get<std::vector<std::string>>();
      if (!IsSafeId(task.task_id) || !IsSafeId(task.domain)) {
        throw Error(ErrorCode::kSchemaError,
                    "task_id and domain must be nonempty [A-Za-z0-9._-]");
      }
      for (const auto& tool : task.tool_names) {
        if (!IsRegisteredTool(tool)) {
          throw Error(ErrorCode::kSchemaError,
                      "task '" + task.task_id + "' references unregistered tool '" +
                          tool + "'");
        }
      }
      for (const auto& prior : tasks) {
        if (prior.task_id == task.task_id) {
          throw Error(ErrorCode::kSchemaError, "duplicate task_id");
        }
      }
      tasks.push_back(std::move(task));
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaError,
                  prefix + ": task '" + id + "': " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaError,
                  prefix + ": task '" + id + "': " + e.what());
    }
  }
  return tasks;
}

std::vector<Task> LoadTaskSuite(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kStorageError, "cannot read task suite " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json document;
  try {
    document = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError,
                "task suite " + path.string() + ": " + e.what());
  }
  return ParseTaskSuite(document);
}

}  // namespace divert
