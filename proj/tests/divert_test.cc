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

#include "divert/divert.h"

#include <set>

#include "divert/mock_world.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace divert {
namespace {

using testing::Dialogue;

const std::vector<std::size_t> kTurns = {0, 2, 4};

std::shared_ptr<MockChatProvider> Scripted(RoleTag tag, std::vector<std::string> bank,
                                           std::map<RoleTag, ChargingRule> charging = {},
                                           std::map<RoleTag, int> failing = {}) {
  MockScript script;
  script.responders[tag] = BankResponder(std::move(bank));
  script.charging = std::move(charging);
  script.failing_attempts = std::move(failing);
  return std::make_shared<MockChatProvider>(script);
}

std::vector<Message> FiveTurns() {
  return Dialogue({"cancel O-1", "done. Anything else?", "and check O-1", "cancelled", "bye"});
}

TEST(ParseJunctionOutput, DocumentedFormat) {
  EXPECT_EQ(ParseJunctionOutput("Reason: sets intent\nIndex: 2", kTurns), 2u);
  EXPECT_EQ(ParseJunctionOutput("index:4", kTurns), 4u);
  EXPECT_EQ(ParseJunctionOutput("Reason: r\n**Index:** 0", {0}), 0u);
  EXPECT_EQ(ParseJunctionOutput("Index: 99\nActually,\nIndex: 0\n", kTurns), 0u);
  EXPECT_EQ(ParseJunctionOutput("INDEX: 2 because", kTurns), 2u);
}

TEST(ParseJunctionOutput, Rejections) {
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Reason: no index", kTurns), ErrorCode::kParseError);
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Index: two", kTurns), ErrorCode::kParseError);
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Index:", kTurns), ErrorCode::kParseError);
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Index: 1", kTurns), ErrorCode::kInvalidIndex);
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Index: 6", kTurns), ErrorCode::kInvalidIndex);
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Index: -2", kTurns), ErrorCode::kInvalidIndex);
  EXPECT_DIVERT_ERROR(ParseJunctionOutput("Index: 0", {}), ErrorCode::kInvalidIndex);
}

TEST(ParseJunctionReason, TextBeforeIndex) {
  EXPECT_EQ(ParseJunctionReason("Reason:  the opener \n matters\nIndex: 2"), "the opener \n matters");
  EXPECT_EQ(ParseJunctionReason("Index: 2"), "");
  EXPECT_EQ(ParseJunctionReason("reason: a\nreason: b\nIndex: 0"), "b");
}

TEST(ChooseJunction, UsesModelAnswer) {
  auto p = Scripted(RoleTag::kJunction, {"Reason: the request\nIndex: 2"});
  JunctionDecision d = ChooseJunction(FiveTurns(), "Goal: cancel O-1", *p, RunConfig{}, 7);
  EXPECT_EQ(d.index, 2u);
  EXPECT_EQ(d.reason, "the request");
  EXPECT_FALSE(d.fallback_used);
  EXPECT_GT(d.overhead.prompt_tokens, 0u);
}

TEST(ChooseJunction, FallsBackToLastUserTurn) {
  for (const char* reply : {"no idea", "Index: 1", "Index: 40"}) {
    auto p = Scripted(RoleTag::kJunction, {reply});
    JunctionDecision d = ChooseJunction(FiveTurns(), "", *p, RunConfig{}, 7);
    EXPECT_EQ(d.index, 4u) << reply;
    EXPECT_TRUE(d.fallback_used);
    EXPECT_NE(d.reason.find("fallback"), std::string::npos);
  }
}

TEST(ChooseJunction, ProviderFailureFallsBackAndKeepsTokens) {
  ChargingRule fixed{ChargingRule::Kind::kFixed, {10, 2}};
  auto p = Scripted(RoleTag::kJunction, {"Index: 0"}, {{RoleTag::kJunction, fixed}},
                    {{RoleTag::kJunction, 3}});
  JunctionDecision d = ChooseJunction(FiveTurns(), "", *p, RunConfig{}, 7);
  EXPECT_EQ(d.index, 4u);
  EXPECT_TRUE(d.fallback_used);
  // Failed attempts produce no completion, so only the prompts are charged.
  EXPECT_EQ(d.overhead, (TokenUsage{30, 0}));
}

TEST(ChooseJunction, NoUserTurn) {
  auto p = Scripted(RoleTag::kJunction, {"Index: 0"});
  std::vector<Message> agent_only = {testing::Msg(0, Role::kAgent, "hello")};
  EXPECT_DIVERT_ERROR(ChooseJunction(agent_only, "", *p, RunConfig{}, 7), ErrorCode::kNoJunction);
  EXPECT_DIVERT_ERROR(ChooseJunction({}, "", *p, RunConfig{}, 7), ErrorCode::kNoJunction);
}

TEST(GenerateCandidates, FixedChargingSumsPerCall) {
  ChargingRule fixed{ChargingRule::Kind::kFixed, {100, 9}};
  auto p = Scripted(RoleTag::kCandidate, {"one", "two", "three", "four", "five", "six"},
                    {{RoleTag::kCandidate, fixed}});
  const Task& task = testing::MiniTask("mo-cancel-open");
  JunctionDecision j{2, "the follow-up", {}, false};
  CandidateSet set = GenerateCandidates(FiveTurns(), task, j, 3, *p, RunConfig{}, 11);
  ASSERT_EQ(set.candidates.size(), 3u);
  EXPECT_EQ(set.original_message, "and check O-1");
  for (const Candidate& c : set.candidates) EXPECT_EQ(c.tokens.total(), 109u);
  EXPECT_EQ(set.TotalTokens().total(), 327u);
  // Same seed, same set.
  EXPECT_EQ(GenerateCandidates(FiveTurns(), task, j, 3, *p, RunConfig{}, 11), set);
}

TEST(GenerateCandidates, CandidatesUseDistinctSeeds) {
  std::vector<std::string> bank;
  for (int i = 0; i < 1000; ++i) bank.push_back("c" + std::to_string(i));
  auto p = Scripted(RoleTag::kCandidate, bank);
  JunctionDecision j{0, "", {}, false};
  CandidateSet set =
      GenerateCandidates(FiveTurns(), testing::MiniTask("mo-cancel-open"), j, 5, *p, RunConfig{}, 3);
  std::set<std::string> texts;
  for (const Candidate& c : set.candidates) texts.insert(c.text);
  EXPECT_EQ(texts.size(), 5u);
}

TEST(GenerateCandidates, Errors) {
  auto p = Scripted(RoleTag::kCandidate, {"x"});
  const Task& task = testing::MiniTask("mo-cancel-open");
  EXPECT_DIVERT_ERROR(GenerateCandidates(FiveTurns(), task, {1, "", {}, false}, 3, *p, RunConfig{}, 1),
                      ErrorCode::kInvalidIndex);
  EXPECT_DIVERT_ERROR(GenerateCandidates(FiveTurns(), task, {0, "", {}, false}, 0, *p, RunConfig{}, 1),
                      ErrorCode::kInvalidArgument);
  auto failing = Scripted(RoleTag::kCandidate, {"x"}, {}, {{RoleTag::kCandidate, 3}});
  try {
    GenerateCandidates(FiveTurns(), task, {0, "", {}, false}, 3, *failing, RunConfig{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCandidateGeneration);
    EXPECT_NE(std::string(e.what()).find("k=0"), std::string::npos);
  }
}

TEST(SelectMostDivergent, PicksLowestSimilarityFirstOnTies) {
  HashingEmbedder embedder(64);
  CandidateSet set;
  set.original_message = "please cancel order one";
  set.candidates = {{"please cancel order one", {}, 0, 0},
                    {"where is my parcel", {}, 0, 0},
                    {"where is my parcel", {}, 0, 0}};
  CandidateSet out = SelectMostDivergent(set, embedder);
  EXPECT_NEAR(out.candidates[0].similarity, 1.0, 1e-12);
  EXPECT_EQ(out.selected_index, 1u);
  for (const Candidate& c : out.candidates) {
    EXPECT_DOUBLE_EQ(c.divergence, 1.0 - c.similarity);
    EXPECT_LE(out.candidates[out.selected_index].similarity, c.similarity);
  }
  set.candidates.clear();
  EXPECT_DIVERT_ERROR(SelectMostDivergent(set, embedder), ErrorCode::kInvalidArgument);
}

TEST(RoundRobinNext, Cycles) {
  EXPECT_EQ(RoundRobinNext(3, 0), (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(RoundRobinNext(3, 4), (std::pair<std::size_t, std::size_t>{1, 5}));
  EXPECT_DIVERT_ERROR(RoundRobinNext(0, 0), ErrorCode::kInvalidState);
}

TEST(DivertBudget, Validate) {
  DivertBudget ok;
  ok.Validate();
  auto field_of = [](DivertBudget b) {
    try {
      b.Validate();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfigError);
      return std::string(e.what());
    }
    return std::string();
  };
  DivertBudget b;
  b.rollouts = 0;
  EXPECT_NE(field_of(b).find("budget.rollouts"), std::string::npos);
  b = {};
  b.branches = -1;
  EXPECT_NE(field_of(b).find("budget.branches"), std::string::npos);
  b = {};
  b.candidates = 0;
  EXPECT_NE(field_of(b).find("budget.candidates"), std::string::npos);
}

struct BranchFixture {
  Providers providers = MakeMockProviders(MockWorldOptions{});
  SnapshotCatalog catalog{nullptr};
  RunConfig config;
  DivertBudget budget;
};

TEST(BranchOnce, ChildSharesPrefixAndCarriesAugmentation) {
  BranchFixture f;
  const Task& task = testing::MiniTask("mo-cancel-then-check");
  Trajectory parent = RunRollout(task, f.config, f.providers, &f.catalog, 42, "1");
  BranchResult r = BranchOnce(parent, task, "1_1", f.catalog, f.providers, f.config, f.budget,
                              Ablation{});
  const Trajectory& child = r.trajectory;
  const std::size_t j = r.junction.index;
  ASSERT_LT(j, parent.messages.size());
  EXPECT_EQ(parent.messages[j].role, Role::kUser);
  EXPECT_EQ(child.lineage.iteration_label, "1_1");
  EXPECT_EQ(child.lineage.parent_label, "1");
  EXPECT_EQ(child.lineage.junction_index, j);
  ASSERT_GT(child.messages.size(), j);
  EXPECT_TRUE(std::equal(parent.messages.begin(), parent.messages.begin() + j,
                         child.messages.begin()));
  ASSERT_TRUE(r.candidates.has_value());
  EXPECT_EQ(r.candidates->candidates.size(), 3u);
  EXPECT_EQ(child.messages[j].content, r.candidates->candidates[r.candidates->selected_index].text);
  EXPECT_EQ(r.candidates->original_message, parent.messages[j].content);
  EXPECT_EQ(child.ledger.junction_overhead, r.junction.overhead);
  EXPECT_EQ(child.ledger.candidate_overhead, r.candidates->TotalTokens());
  EXPECT_TRUE(r.continuations.empty());
  // The child's own snapshots resolve under its label.
  EXPECT_TRUE(f.catalog.Find("1_1", j).has_value());
}

TEST(BranchOnce, Deterministic) {
  const Task& task = testing::MiniTask("mo-damaged-escalate");
  auto once = [&] {
    BranchFixture f;
    Trajectory parent = RunRollout(task, f.config, f.providers, &f.catalog, 42, "1");
    return BranchOnce(parent, task, "1_1", f.catalog, f.providers, f.config, f.budget, Ablation{})
        .trajectory;
  };
  EXPECT_EQ(once(), once());
}

TEST(BranchOnce, UndirectedRegeneratesWithUserSimulator) {
  BranchFixture f;
  const Task& task = testing::MiniTask("mo-cancel-open");
  Trajectory parent = RunRollout(task, f.config, f.providers, &f.catalog, 42, "1");
  Ablation ablation;
  ablation.directed_generation = false;
  BranchResult r = BranchOnce(parent, task, "1_1", f.catalog, f.providers, f.config, f.budget, ablation);
  EXPECT_FALSE(r.candidates.has_value());
  EXPECT_EQ(r.trajectory.ledger.candidate_overhead, TokenUsage{});
}

TEST(BranchOnce, ProbesEveryCandidate) {
  BranchFixture f;
  const Task& task = testing::MiniTask("mo-refund-delivered");
  Trajectory parent = RunRollout(task, f.config, f.providers, &f.catalog, 42, "1");
  Ablation ablation;
  ablation.probe_continuations = true;
  BranchResult r = BranchOnce(parent, task, "1_1", f.catalog, f.providers, f.config, f.budget, ablation);
  ASSERT_EQ(r.continuations.size(), 3u);
  const std::size_t j = r.junction.index;
  for (std::size_t k = 0; k < 3; ++k) {
    ASSERT_FALSE(r.continuations[k].empty());
    EXPECT_EQ(r.continuations[k][0].content, r.candidates->candidates[k].text);
  }
  EXPECT_EQ(r.continuations[r.candidates->selected_index],
            std::vector<Message>(r.trajectory.messages.begin() + j, r.trajectory.messages.end()));
  EXPECT_GT(r.probe_tokens.total(), 0u);
}

TEST(BranchOnce, MissingSnapshotIsBranchError) {
  BranchFixture f;
  const Task& task = testing::MiniTask("mo-cancel-open");
  Trajectory parent = RunRollout(task, f.config, f.providers, nullptr, 42, "1");
  EXPECT_DIVERT_ERROR(
      BranchOnce(parent, task, "1_1", f.catalog, f.providers, f.config, f.budget, Ablation{}),
      ErrorCode::kBranchError);
}

TEST(RunDivert, CountsAndLabels) {
  DivertOptions options;
  options.budget.rollouts = 2;
  options.budget.branches = 2;
  DivertResult result =
      RunDivert(testing::MiniOrders(), options, RunConfig{}, MakeMockProviders({}), nullptr);
  ASSERT_EQ(result.report.tasks.size(), testing::MiniOrders().size());
  EXPECT_EQ(result.pool.size(), 4 * testing::MiniOrders().size());
  EXPECT_EQ(result.candidates.size(), 2 * testing::MiniOrders().size());
  for (std::size_t t = 0; t < testing::MiniOrders().size(); ++t) {
    const TaskReport& rep = result.report.tasks[t];
    EXPECT_EQ(rep.rollouts, 2);
    EXPECT_EQ(rep.branches_ok, 2);
    EXPECT_EQ(rep.branches_failed, 0);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < 4; ++i) {
      const Trajectory& tr = result.pool[4 * t + i];
      EXPECT_EQ(tr.task_id, testing::MiniOrders()[t].task_id);
      labels.push_back(tr.lineage.iteration_label);
    }
    EXPECT_EQ(labels, (std::vector<std::string>{"1", "2", "1_1", "2_1"}));
    EXPECT_EQ(result.pool[4 * t].seed, 42);
    EXPECT_EQ(result.pool[4 * t + 1].seed, 43);
  }
}

TEST(RunDivert, IndependentOfThreadCount) {
  DivertOptions options;
  options.budget.rollouts = 2;
  options.budget.branches = 3;
  MockWorldOptions world;
  world.user_style = UserStyle::kStochastic;
  DivertResult serial = RunDivert(testing::MiniOrders(), options, RunConfig{}, MakeMockProviders(world), nullptr);
  options.parallel = 4;
  DivertResult parallel =
      RunDivert(testing::MiniOrders(), options, RunConfig{}, MakeMockProviders(world), nullptr);
  EXPECT_EQ(serial.pool, parallel.pool);
  EXPECT_EQ(serial.report.ToJson(), parallel.report.ToJson());
}

TEST(RunDivert, DepthLimitTurnsBranchesIntoFailures) {
  DivertOptions options;
  options.budget.rollouts = 1;
  options.budget.branches = 3;
  options.budget.max_branch_depth = 1;
  std::vector<Task> one = {testing::MiniTask("mo-cancel-open")};
  DivertResult result = RunDivert(one, options, RunConfig{}, MakeMockProviders({}), nullptr);
  // "1" can take children; they cannot.
  EXPECT_EQ(result.report.tasks[0].branches_ok, 3);
  options.budget.max_branch_depth = 0;
  result = RunDivert(one, options, RunConfig{}, MakeMockProviders({}), nullptr);
  EXPECT_EQ(result.report.tasks[0].branches_ok, 0);
  EXPECT_EQ(result.report.tasks[0].branches_failed, 3);
  EXPECT_EQ(result.report.BranchFailures(), 3);
  EXPECT_EQ(result.pool.size(), 1u);
}

TEST(RunDivert, FailedBranchesAreReportedNotFatal) {
  MockWorldOptions world;
  world.failing_attempts[RoleTag::kCandidate] = 3;
  DivertOptions options;
  options.budget.rollouts = 1;
  options.budget.branches = 2;
  std::vector<Task> one = {testing::MiniTask("mo-cancel-open")};
  DivertResult result = RunDivert(one, options, RunConfig{}, MakeMockProviders(world), nullptr);
  ASSERT_EQ(result.report.tasks[0].failures.size(), 2u);
  EXPECT_EQ(result.report.tasks[0].failures[0].code, "candidate-generation-error");
  EXPECT_EQ(result.report.tasks[0].failures[0].child_label, "1_1");
  EXPECT_EQ(result.report.tasks[0].failures[1].child_label, "1_2");
  EXPECT_EQ(result.pool.size(), 1u);
}

TEST(CandidateRecord, JsonRoundTrip) {
  DivertOptions options;
  options.budget.rollouts = 1;
  options.budget.branches = 2;
  options.ablation.probe_continuations = true;
  DivertResult result = RunDivert({testing::MiniTask("mo-refund-delivered")}, options, RunConfig{},
                                  MakeMockProviders({}), nullptr);
  ASSERT_EQ(result.candidates.size(), 2u);
  for (const CandidateRecord& r : result.candidates) {
    nlohmann::json j = CandidateRecordToJson(r);
    EXPECT_EQ(CandidateRecordToJson(CandidateRecordFromJson(j)), j);
    CandidateRecord back = CandidateRecordFromJson(j);
    EXPECT_EQ(back.set, r.set);
    EXPECT_EQ(back.continuations, r.continuations);
    EXPECT_EQ(back.original_suffix, r.original_suffix);
  }
  EXPECT_DIVERT_ERROR(CandidateRecordFromJson(nlohmann::json::object()), ErrorCode::kSchemaError);
}

}  // namespace
}  // namespace divert
