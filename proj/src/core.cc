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

#include "divert/core.h"

#include <charconv>
#include <limits>

namespace divert {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidState: return "invalid-state";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kInvalidIndex: return "invalid-index";
    case ErrorCode::kNoJunction: return "no-junction";
    case ErrorCode::kProviderError: return "provider-error";
    case ErrorCode::kCandidateGeneration: return "candidate-generation-error";
    case ErrorCode::kBranchError: return "branch-error";
    case ErrorCode::kSchemaError: return "schema-error";
    case ErrorCode::kStorageError: return "storage-error";
    case ErrorCode::kIntegrityError: return "integrity-error";
    case ErrorCode::kCorruption: return "corruption-error";
    case ErrorCode::kMigration: return "migration-error";
    case ErrorCode::kUndefinedMetric: return "undefined-metric";
    case ErrorCode::kUnparseableVerdict: return "unparseable-verdict";
    case ErrorCode::kConfigError: return "config-error";
  }
  return "unknown";
}

std::string_view RoleName(Role role) {
  switch (role) {
    case Role::kUser: return "user";
    case Role::kAgent: return "agent";
    case Role::kSystem: return "system";
    case Role::kTool: return "tool";
  }
  return "user";
}

Role ParseRole(std::string_view name) {
  if (name == "user") return Role::kUser;
  if (name == "agent") return Role::kAgent;
  if (name == "system") return Role::kSystem;
  if (name == "tool") return Role::kTool;
  throw Error(ErrorCode::kParseError, "unknown role '" + std::string(name) + "'");
}

std::string ScalarToString(const Scalar& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), std::get<double>(value));
  return std::string(buf, end);
}

namespace {

std::uint64_t SaturatingAdd(std::uint64_t a, std::uint64_t b, bool* saturated) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (a > kMax - b) {
    if (saturated != nullptr) *saturated = true;
    return kMax;
  }
  return a + b;
}

}  // namespace

std::uint64_t TokenUsage::total() const {
  return SaturatingAdd(prompt_tokens, completion_tokens, nullptr);
}

TokenUsage AddUsage(const TokenUsage& a, const TokenUsage& b, bool* saturated) {
  return {SaturatingAdd(a.prompt_tokens, b.prompt_tokens, saturated),
          SaturatingAdd(a.completion_tokens, b.completion_tokens, saturated)};
}

TokenUsage TokenLedger::overhead() const {
  return AddUsage(junction_overhead, candidate_overhead);
}

TokenLedger LedgerMerge(const TokenLedger& a, const TokenLedger& b,
                        bool* saturated) {
  return {AddUsage(a.agent, b.agent, saturated),
          AddUsage(a.user, b.user, saturated),
          AddUsage(a.junction_overhead, b.junction_overhead, saturated),
          AddUsage(a.candidate_overhead, b.candidate_overhead, saturated)};
}

std::string_view OutcomeStatusName(OutcomeStatus status) {
  switch (status) {
    case OutcomeStatus::kSuccess: return "success";
    case OutcomeStatus::kFailure: return "failure";
    case OutcomeStatus::kIncomplete: return "incomplete";
  }
  return "incomplete";
}

OutcomeStatus ParseOutcomeStatus(std::string_view name) {
  if (name == "success") return OutcomeStatus::kSuccess;
  if (name == "failure") return OutcomeStatus::kFailure;
  if (name == "incomplete") return OutcomeStatus::kIncomplete;
  throw Error(ErrorCode::kParseError, "unknown outcome '" + std::string(name) + "'");
}

std::string_view TerminationReasonName(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kTaskDone: return "task_done";
    case TerminationReason::kMaxSteps: return "max_steps";
    case TerminationReason::kMaxErrors: return "max_errors";
    case TerminationReason::kProviderError: return "provider_error";
  }
  return "max_steps";
}

TerminationReason ParseTerminationReason(std::string_view name) {
  if (name == "task_done") return TerminationReason::kTaskDone;
  if (name == "max_steps") return TerminationReason::kMaxSteps;
  if (name == "max_errors") return TerminationReason::kMaxErrors;
  if (name == "provider_error") return TerminationReason::kProviderError;
  throw Error(ErrorCode::kParseError,
              "unknown termination reason '" + std::string(name) + "'");
}

std::vector<std::size_t> Trajectory::UserTurnIndices() const {
  std::vector<std::size_t> out;
  for (const Message& m : messages) {
    if (m.role == Role::kUser) out.push_back(m.index);
  }
  return out;
}

std::string IterationChildLabel(std::string_view parent_label,
                                std::int64_t child_index) {
  if (child_index < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "child index must be >= 1, got " + std::to_string(child_index));
  }
  if (!parent_label.empty() && !IsValidIterationLabel(parent_label)) {
    throw Error(ErrorCode::kInvalidArgument,
                "malformed parent label '" + std::string(parent_label) + "'");
  }
  std::string out(parent_label);
  if (!out.empty()) out += '_';
  out += std::to_string(child_index);
  return out;
}

bool IsValidIterationLabel(std::string_view label) {
  if (label.empty()) return false;
  bool component_start = true;
  for (char c : label) {
    if (c == '_') {
      if (component_start) return false;
      component_start = true;
    } else if (c >= '0' && c <= '9') {
      // Components are positive integers without leading zeros.
      if (component_start && c == '0') return false;
      component_start = false;
    } else {
      return false;
    }
  }
  return !component_start;
}

ParsedLabel ParseIterationLabel(std::string_view label) {
  if (!IsValidIterationLabel(label)) {
    throw Error(ErrorCode::kParseError,
                "malformed iteration label '" + std::string(label) + "'");
  }
  ParsedLabel out;
  std::size_t cut = label.rfind('_');
  std::string_view tail = label;
  if (cut != std::string_view::npos) {
    out.parent_label = std::string(label.substr(0, cut));
    tail = label.substr(cut + 1);
  }
  auto [ptr, ec] =
      std::from_chars(tail.data(), tail.data() + tail.size(), out.child_index);
  if (ec != std::errc()) {
    throw Error(ErrorCode::kParseError,
                "child index out of range in '" + std::string(label) + "'");
  }
  return out;
}

std::size_t LabelDepth(std::string_view label) {
  std::size_t depth = 0;
  for (char c : label) depth += c == '_';
  return depth;
}

// ---- JSON ----

}  // namespace divert

void nlohmann::adl_serializer<divert::Scalar>::to_json(nlohmann::json& j,
                                                       const divert::Scalar& v) {
  std::visit([&j](const auto& x) { j = x; }, v);
}

void nlohmann::adl_serializer<divert::Scalar>::from_json(const nlohmann::json& j,
                                                         divert::Scalar& v) {
  using divert::Error;
  using divert::ErrorCode;
  if (j.is_string()) {
    v = j.get<std::string>();
  } else if (j.is_number_integer()) {
    v = j.get<std::int64_t>();
  } else if (j.is_number_float()) {
    v = j.get<double>();
  } else {
    throw Error(ErrorCode::kParseError, "scalar must be a string or number");
  }
}

namespace divert {

void to_json(nlohmann::json& j, const TokenUsage& v) {
  j = {{"prompt_tokens", v.prompt_tokens},
       {"completion_tokens", v.completion_tokens}};
}

void from_json(const nlohmann::json& j, TokenUsage& v) {
  v.prompt_tokens = j.at("prompt_tokens").get<std::uint64_t>();
  v.completion_tokens = j.at("completion_tokens").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const ToolCall& v) {
  j = {{"name", v.name}, {"arguments", v.arguments}};
}

void from_json(const nlohmann::json& j, ToolCall& v) {
  v.name = j.at("name").get<std::string>();
  v.arguments = j.at("arguments").get<FieldMap>();
}

void to_json(nlohmann::json& j, const Message& v) {
  j = {{"index", v.index},
       {"role", RoleName(v.role)},
       {"content", v.content},
       {"tokens", v.tokens}};
  j["tool_call"] = v.tool_call ? nlohmann::json(*v.tool_call) : nullptr;
  j["tool_result"] = v.tool_result ? nlohmann::json(*v.tool_result) : nullptr;
}

void from_json(const nlohmann::json& j, Message& v) {
  v.index = j.at("index").get<std::size_t>();
  v.role = ParseRole(j.at("role").get<std::string>());
  v.content = j.at("content").get<std::string>();
  v.tokens = j.at("tokens").get<TokenUsage>();
  v.tool_call.reset();
  v.tool_result.reset();
  if (j.contains("tool_call") && !j["tool_call"].is_null()) {
    v.tool_call = j["tool_call"].get<ToolCall>();
  }
  if (j.contains("tool_result") && !j["tool_result"].is_null()) {
    v.tool_result = j["tool_result"].get<std::string>();
  }
}

void to_json(nlohmann::json& j, const TokenLedger& v) {
  j = {{"agent", v.agent},
       {"user", v.user},
       {"junction_overhead", v.junction_overhead},
       {"candidate_overhead", v.candidate_overhead}};
}

void from_json(const nlohmann::json& j, TokenLedger& v) {
  v.agent = j.at("agent").get<TokenUsage>();
  v.user = j.at("user").get<TokenUsage>();
  v.junction_overhead = j.at("junction_overhead").get<TokenUsage>();
  v.candidate_overhead = j.at("candidate_overhead").get<TokenUsage>();
}

void to_json(nlohmann::json& j, const Outcome& v) {
  j = {{"status", OutcomeStatusName(v.status)},
       {"termination_reason", TerminationReasonName(v.termination_reason)}};
}

void from_json(const nlohmann::json& j, Outcome& v) {
  v.status = ParseOutcomeStatus(j.at("status").get<std::string>());
  v.termination_reason =
      ParseTerminationReason(j.at("termination_reason").get<std::string>());
}

namespace {

template <typename T>
nlohmann::json OptionalJson(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> OptionalFrom(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const Lineage& v) {
  j = {{"iteration_label", v.iteration_label},
       {"parent_label", OptionalJson(v.parent_label)},
       {"junction_index", OptionalJson(v.junction_index)},
       {"junction_reason", OptionalJson(v.junction_reason)}};
}

void from_json(const nlohmann::json& j, Lineage& v) {
  v.iteration_label = j.at("iteration_label").get<std::string>();
  v.parent_label = OptionalFrom<std::string>(j, "parent_label");
  v.junction_index = OptionalFrom<std::size_t>(j, "junction_index");
  v.junction_reason = OptionalFrom<std::string>(j, "junction_reason");
}

void to_json(nlohmann::json& j, const Trajectory& v) {
  j = {{"task_id", v.task_id},
       {"seed", v.seed},
       {"messages", v.messages},
       {"outcome", v.outcome},
       {"ledger", v.ledger},
       {"lineage", v.lineage},
       {"step_count", v.step_count},
       {"error_count", v.error_count}};
}

void from_json(const nlohmann::json& j, Trajectory& v) {
  v.task_id = j.at("task_id").get<std::string>();
  v.seed = j.at("seed").get<std::int64_t>();
  v.messages = j.at("messages").get<std::vector<Message>>();
  v.outcome = j.at("outcome").get<Outcome>();
  v.ledger = j.at("ledger").get<TokenLedger>();
  v.lineage = j.at("lineage").get<Lineage>();
  v.step_count = j.at("step_count").get<std::int64_t>();
  v.error_count = j.at("error_count").get<std::int64_t>();
}

void to_json(nlohmann::json& j, const Augmentation& v) {
  j = {{"original_message", v.original_message},
       {"modified_message", v.modified_message},
       {"junction_index", v.junction_index},
       {"junction_reason", v.junction_reason},
       {"overhead_tokens", v.overhead}};
}

void from_json(const nlohmann::json& j, Augmentation& v) {
  v.original_message = j.at("original_message").get<std::string>();
  v.modified_message = j.at("modified_message").get<std::string>();
  v.junction_index = j.at("junction_index").get<std::size_t>();
  v.junction_reason = j.at("junction_reason").get<std::string>();
  v.overhead = j.at("overhead_tokens").get<TokenUsage>();
}

std::string TrajectoryToJsonLine(const Trajectory& trajectory) {
  return nlohmann::json(trajectory).dump();
}

Trajectory TrajectoryFromJsonLine(std::string_view line) {
  try {
    return nlohmann::json::parse(line).get<Trajectory>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("trajectory line: ") + e.what());
  }
}

}  // namespace divert
