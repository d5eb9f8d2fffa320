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

// Offline stand-ins for every model role, tuned to the mini-orders domain.
//
// The agent is a keyword policy with one deliberate flaw: the word "cancel"
// wins over every other intent, negated or not. Cooperative customers never
// say it unless they mean it, so linear rollouts pass; phrasings such as
// "I don't want to cancel ..., I just want my $5 back" cancel the order.
//
// Users pursue the "Goal: <kind> <order> [amount]" lines of their
// instructions in order and send ###DONE### once the agent has acknowledged
// each one.

#ifndef DIVERT_MOCK_WORLD_H_
#define DIVERT_MOCK_WORLD_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "divert/orchestrator.h"
#include "divert/providers.h"

namespace divert {

enum class UserStyle { kCooperative, kStochastic, kNeverConclude };

std::string_view UserStyleName(UserStyle style);
// Throws kConfigError for unknown names.
UserStyle ParseUserStyle(std::string_view name);

struct Goal {
  std::string kind;  // cancel | refund | status | escalate
  std::string order_id;
  std::optional<std::int64_t> amount;

  bool operator==(const Goal&) const = default;
};

// Reads every "Goal: ..." line; other lines are ignored.
std::vector<Goal> ParseGoals(std::string_view instructions);

// First "O-<digits>" in `text`, if any.
std::optional<std::string> FindOrderId(std::string_view text);

// Whether `agent_text` confirms that `goal` was carried out.
bool AcknowledgesGoal(std::string_view agent_text, const Goal& goal);

// Phrase banks; "{id}" and "{amount}" are substituted.
const std::vector<std::string>& CooperativePhrasings(std::string_view kind);
const std::vector<std::string>& DivergentPhrasings(std::string_view kind);
std::string FillPhrasing(std::string_view tmpl, const Goal& goal);

// Individual responders, exposed for tests.
std::string MockAgentReply(const ChatRequest& request);
std::string MockUserReply(const ChatRequest& request, std::uint64_t draw, UserStyle style);
std::string MockJunctionReply(const ChatRequest& request, std::uint64_t draw);
std::string MockCandidateReply(const ChatRequest& request, std::uint64_t draw);
std::string MockJudgeReply(const ChatRequest& request);

struct MockWorldOptions {
  std::uint64_t seed = 42;
  UserStyle user_style = UserStyle::kCooperative;
  std::map<RoleTag, ChargingRule> charging;
  std::map<RoleTag, int> failing_attempts;
  std::size_t embedding_dimension = 64;
};

MockScript MockWorldScript(const MockWorldOptions& options);

// One MockChatProvider serves every role; the embedder is a HashingEmbedder.
Providers MakeMockProviders(const MockWorldOptions& options);

}  // namespace divert

#endif  // DIVERT_MOCK_WORLD_H_
