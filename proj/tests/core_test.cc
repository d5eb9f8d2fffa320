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

#include <limits>
#include <random>

#include "gtest/gtest.h"
#include "test_util.h"

namespace divert {
namespace {

using testing::Msg;

TEST(IterationChildLabel, JoinsWithUnderscore) {
  EXPECT_EQ(IterationChildLabel("1_2", 3), "1_2_3");
  EXPECT_EQ(IterationChildLabel("", 1), "1");
  EXPECT_EQ(IterationChildLabel("1", 4), "1_4");
}

TEST(IterationChildLabel, RejectsNonPositiveIndex) {
  EXPECT_DIVERT_ERROR(IterationChildLabel("1", 0), ErrorCode::kInvalidArgument);
  EXPECT_DIVERT_ERROR(IterationChildLabel("", -2), ErrorCode::kInvalidArgument);
  EXPECT_DIVERT_ERROR(IterationChildLabel("1__2", 1), ErrorCode::kInvalidArgument);
}

TEST(IterationLabel, ParseInvertsChildLabel) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string label;
    int depth = 1 + static_cast<int>(rng() % 5);
    for (int d = 0; d < depth; ++d) {
      label = IterationChildLabel(label, 1 + static_cast<std::int64_t>(rng() % 40));
    }
    ParsedLabel parsed = ParseIterationLabel(label);
    EXPECT_EQ(IterationChildLabel(parsed.parent_label, parsed.child_index), label);
    EXPECT_EQ(LabelDepth(label), static_cast<std::size_t>(depth - 1));
  }
}

TEST(IterationLabel, Validity) {
  EXPECT_TRUE(IsValidIterationLabel("1"));
  EXPECT_TRUE(IsValidIterationLabel("12_3_40"));
  EXPECT_FALSE(IsValidIterationLabel(""));
  EXPECT_FALSE(IsValidIterationLabel("0"));
  EXPECT_FALSE(IsValidIterationLabel("1_"));
  EXPECT_FALSE(IsValidIterationLabel("_1"));
  EXPECT_FALSE(IsValidIterationLabel("1_02"));
  EXPECT_FALSE(IsValidIterationLabel("a"));
  EXPECT_DIVERT_ERROR(ParseIterationLabel(""), ErrorCode::kParseError);
}

TEST(LedgerMerge, ZeroIsIdentity) {
  TokenLedger zero;
  EXPECT_EQ(LedgerMerge(zero, zero), zero);
}

TEST(LedgerMerge, AddsComponentwise) {
  TokenLedger a, b;
  a.agent.completion_tokens = 100;
  b.agent.completion_tokens = 50;
  b.junction_overhead.prompt_tokens = 7;
  TokenLedger m = LedgerMerge(a, b);
  EXPECT_EQ(m.agent.completion_tokens, 150u);
  EXPECT_EQ(m.junction_overhead.prompt_tokens, 7u);
  EXPECT_EQ(m.overhead().total(), 7u);
}

TEST(LedgerMerge, SaturatesAndReports) {
  TokenLedger a, b;
  a.user.prompt_tokens = std::numeric_limits<std::uint64_t>::max() - 1;
  b.user.prompt_tokens = 5;
  bool saturated = false;
  TokenLedger m = LedgerMerge(a, b, &saturated);
  EXPECT_TRUE(saturated);
  EXPECT_EQ(m.user.prompt_tokens, std::numeric_limits<std::uint64_t>::max());

  saturated = false;
  LedgerMerge(TokenLedger{}, b, &saturated);
  EXPECT_FALSE(saturated);
}

TEST(LedgerMerge, MatchesPerMessageSums) {
  // Ledgers built from random messages; merging them equals summing all
  // message tokens directly.
  std::mt19937_64 rng(11);
  TokenLedger total;
  std::uint64_t agent_sum = 0, user_sum = 0;
  for (int t = 0; t < 30; ++t) {
    TokenLedger ledger;
    for (int i = 0; i < 12; ++i) {
      Message m = Msg(i, i % 2 ? Role::kAgent : Role::kUser, "x");
      m.tokens.prompt_tokens = rng() % 1000;
      m.tokens.completion_tokens = rng() % 1000;
      TokenUsage& bucket = m.role == Role::kAgent ? ledger.agent : ledger.user;
      bucket = AddUsage(bucket, m.tokens);
      (m.role == Role::kAgent ? agent_sum : user_sum) += m.tokens.total();
    }
    total = LedgerMerge(total, ledger);
  }
  EXPECT_EQ(total.agent.total(), agent_sum);
  EXPECT_EQ(total.user.total(), user_sum);
}

TEST(Trajectory, UserTurnIndices) {
  Trajectory t;
  t.messages = {Msg(0, Role::kUser, "a"), Msg(1, Role::kAgent, "b"), Msg(2, Role::kTool, "c"),
                Msg(3, Role::kAgent, "d"), Msg(4, Role::kUser, "e")};
  EXPECT_EQ(t.UserTurnIndices(), (std::vector<std::size_t>{0, 4}));
}

TEST(Json, TrajectoryRoundTrip) {
  Trajectory t;
  t.task_id = "mo-x";
  t.seed = -3;
  t.messages.push_back(Msg(0, Role::kUser, "cancel O-1 please"));
  Message agent = Msg(1, Role::kAgent, "ok");
  agent.tool_call = ToolCall{"cancel_order", {{"order_id", std::string("O-1")}, {"n", std::int64_t{2}}}};
  agent.tokens = {3, 4};
  t.messages.push_back(agent);
  Message tool = Msg(2, Role::kTool, "cancel_order ok");
  tool.tool_result = "{\"status\":\"cancelled\"}";
  t.messages.push_back(tool);
  t.outcome = {OutcomeStatus::kFailure, TerminationReason::kMaxErrors};
  t.ledger.candidate_overhead = {10, 327};
  t.lineage = {"2_1", std::string("2"), std::size_t{4}, std::string("pivot")};
  t.step_count = 3;
  t.error_count = 1;

  std::string line = TrajectoryToJsonLine(t);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(TrajectoryFromJsonLine(line), t);
  EXPECT_EQ(TrajectoryToJsonLine(TrajectoryFromJsonLine(line)), line);
}

TEST(Json, RejectsBadLines) {
  EXPECT_DIVERT_ERROR(TrajectoryFromJsonLine("{not json"), ErrorCode::kParseError);
  EXPECT_DIVERT_ERROR(TrajectoryFromJsonLine("{}"), ErrorCode::kParseError);
}

TEST(Names, RoundTrip) {
  for (Role r : {Role::kUser, Role::kAgent, Role::kSystem, Role::kTool}) {
    EXPECT_EQ(ParseRole(RoleName(r)), r);
  }
  for (OutcomeStatus s : {OutcomeStatus::kSuccess, OutcomeStatus::kFailure, OutcomeStatus::kIncomplete}) {
    EXPECT_EQ(ParseOutcomeStatus(OutcomeStatusName(s)), s);
  }
  for (TerminationReason r : {TerminationReason::kTaskDone, TerminationReason::kMaxSteps,
                              TerminationReason::kMaxErrors, TerminationReason::kProviderError}) {
    EXPECT_EQ(ParseTerminationReason(TerminationReasonName(r)), r);
  }
  EXPECT_DIVERT_ERROR(ParseRole("robot"), ErrorCode::kParseError);
}

TEST(Outcome, IncompleteCountsAsFailed) {
  EXPECT_FALSE((Outcome{OutcomeStatus::kSuccess, TerminationReason::kTaskDone}).failed());
  EXPECT_TRUE((Outcome{OutcomeStatus::kFailure, TerminationReason::kTaskDone}).failed());
  EXPECT_TRUE((Outcome{OutcomeStatus::kIncomplete, TerminationReason::kMaxSteps}).failed());
}

}  // namespace
}  // namespace divert
