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

// Value types shared by every stage of the engine: messages, token
// accounting, outcomes, lineage labels and trajectories.

#ifndef DIVERT_CORE_H_
#define DIVERT_CORE_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "divert/error.h"
#include "json.hpp"

namespace divert {

enum class Role { kUser, kAgent, kSystem, kTool };

std::string_view RoleName(Role role);
Role ParseRole(std::string_view name);

// Flat field value used by tool arguments and environment records.
using Scalar = std::variant<std::int64_t, double, std::string>;
using FieldMap = std::map<std::string, Scalar>;

std::string ScalarToString(const Scalar& value);

struct TokenUsage {
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;

  std::uint64_t total() const;
  bool operator==(const TokenUsage&) const = default;
};

// Componentwise sum. Saturates at the max representable count; `saturated`
// is set when that happens.
TokenUsage AddUsage(const TokenUsage& a, const TokenUsage& b,
                    bool* saturated = nullptr);

struct ToolCall {
  std::string name;
  FieldMap arguments;

  bool operator==(const ToolCall&) const = default;
};

struct Message {
  std::size_t index = 0;
  Role role = Role::kUser;
  std::string content;
  std::optional<ToolCall> tool_call;  // agent only
  std::optional<std::string> tool_result;  // tool only
  TokenUsage tokens;

  bool operator==(const Message&) const = default;
};

struct TokenLedger {
  TokenUsage agent;
  TokenUsage user;
  TokenUsage junction_overhead;
  TokenUsage candidate_overhead;

  TokenUsage overhead() const;
  bool operator==(const TokenLedger&) const = default;
};

TokenLedger LedgerMerge(const TokenLedger& a, const TokenLedger& b,
                        bool* saturated = nullptr);

enum class OutcomeStatus { kSuccess, kFailure, kIncomplete };
enum class TerminationReason { kTaskDone, kMaxSteps, kMaxErrors, kProviderError };

std::string_view OutcomeStatusName(OutcomeStatus status);
OutcomeStatus ParseOutcomeStatus(std::string_view name);
std::string_view TerminationReasonName(TerminationReason reason);
TerminationReason ParseTerminationReason(std::string_view name);

struct Outcome {
  OutcomeStatus status = OutcomeStatus::kIncomplete;
  TerminationReason termination_reason = TerminationReason::kMaxSteps;

  // Failures and incomplete runs both count as failed trajectories.
  bool failed() const { return status != OutcomeStatus::kSuccess; }
  bool operator==(const Outcome&) const = default;
};

struct Lineage {
  std::string iteration_label;
  std::optional<std::string> parent_label;
  std::optional<std::size_t> junction_index;
  std::optional<std::string> junction_reason;

  bool operator==(const Lineage&) const = default;
};

struct Trajectory {
  std::string task_id;
  std::int64_t seed = 0;
  std::vector<Message> messages;
  Outcome outcome;
  TokenLedger ledger;
  Lineage lineage;
  std::int64_t step_count = 0;
  std::int64_t error_count = 0;

  std::vector<std::size_t> UserTurnIndices() const;
  bool operator==(const Trajectory&) const = default;
};

// Recorded when a continuation was injected at a junction.
struct Augmentation {
  std::string original_message;
  std::string modified_message;
  std::size_t junction_index = 0;
  std::string junction_reason;
  TokenUsage overhead;

  bool operator==(const Augmentation&) const = default;
};

// Iteration labels: "" is the task's initial state, "3" a first-generation
// child, "1_2_3" a third-generation descendant.
std::string IterationChildLabel(std::string_view parent_label,
                                std::int64_t child_index);

struct ParsedLabel {
  std::string parent_label;
  std::int64_t child_index = 0;
};

// Inverse of IterationChildLabel. Throws kParseError for "" or malformed
// labels.
ParsedLabel ParseIterationLabel(std::string_view label);
bool IsValidIterationLabel(std::string_view label);

// Number of generations below the first one: "1" -> 0, "1_2" -> 1.
std::size_t LabelDepth(std::string_view label);

// JSON mapping. Field names match the struct fields.
void to_json(nlohmann::json& j, const TokenUsage& v);
void from_json(const nlohmann::json& j, TokenUsage& v);
void to_json(nlohmann::json& j, const ToolCall& v);
void from_json(const nlohmann::json& j, ToolCall& v);
void to_json(nlohmann::json& j, const Message& v);
void from_json(const nlohmann::json& j, Message& v);
void to_json(nlohmann::json& j, const TokenLedger& v);
void from_json(const nlohmann::json& j, TokenLedger& v);
void to_json(nlohmann::json& j, const Outcome& v);
void from_json(const nlohmann::json& j, Outcome& v);
void to_json(nlohmann::json& j, const Lineage& v);
void from_json(const nlohmann::json& j, Lineage& v);
void to_json(nlohmann::json& j, const Trajectory& v);
void from_json(const nlohmann::json& j, Trajectory& v);
void to_json(nlohmann::json& j, const Augmentation& v);
void from_json(const nlohmann::json& j, Augmentation& v);

std::string TrajectoryToJsonLine(const Trajectory& trajectory);
Trajectory TrajectoryFromJsonLine(std::string_view line);

}  // namespace divert

// Scalar is a std::variant, so ADL cannot find serializers in divert.
template <>
struct nlohmann::adl_serializer<divert::Scalar> {
  static void to_json(nlohmann::json& j, const divert::Scalar& v);
  static void from_json(const nlohmann::json& j, divert::Scalar& v);
};

#endif  // DIVERT_CORE_H_
