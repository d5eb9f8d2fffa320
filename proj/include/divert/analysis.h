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

// Metrics over trajectory pools. A pool is a list of trajectories in creation
// order. A trajectory counts as failed unless its outcome is success, so
// incomplete runs (step or error budget exhausted) are failures too. "Agent
// tokens" are agent completion tokens.

#ifndef DIVERT_ANALYSIS_H_
#define DIVERT_ANALYSIS_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "divert/core.h"
#include "divert/divert.h"
#include "divert/providers.h"
#include "json.hpp"

namespace divert {

// ---- Failure discovery ----

struct TaskMetrics {
  std::string task_id;
  std::int64_t trajectories = 0;
  std::int64_t failures = 0;
  std::uint64_t agent_tokens = 0;
  std::uint64_t overhead_tokens = 0;
};

struct MetricsReport {
  double errors_per_100k = 0.0;
  std::int64_t task_failure_count = 0;
  std::int64_t failed_trajectories = 0;
  std::int64_t trajectories = 0;
  std::uint64_t total_agent_tokens = 0;
  std::uint64_t total_agent_prompt_tokens = 0;
  std::uint64_t total_user_tokens = 0;
  std::uint64_t total_overhead_tokens = 0;
  std::uint64_t total_tokens = 0;
  std::vector<TaskMetrics> per_task;  // first-appearance order
};

std::uint64_t AgentTokens(const Trajectory& t);
std::uint64_t OverheadTokens(const Trajectory& t);

// failures / agent tokens * 1e5. Throws kUndefinedMetric when the pool has no
// agent tokens.
double ErrorsPer100k(const std::vector<Trajectory>& pool);
std::int64_t TaskFailureCount(const std::vector<Trajectory>& pool);
// errors_per_100k is left at 0 when it is undefined.
MetricsReport ComputeMetrics(const std::vector<Trajectory>& pool);

// ---- Coverage ----

struct CoveragePoint {
  std::uint64_t cumulative_tokens = 0;
  std::int64_t unique_failed_tasks = 0;

  bool operator==(const CoveragePoint&) const = default;
};

// One point per trajectory, accumulating agent + overhead tokens.
std::vector<CoveragePoint> CoverageCurve(const std::vector<Trajectory>& pool);
// Step-function value: the count of the last point within `budget`, else 0.
std::int64_t CoverageAt(const std::vector<CoveragePoint>& curve, std::uint64_t budget);
// True when `a` is >= `b` at every token budget.
bool CoverageDominates(const std::vector<CoveragePoint>& a,
                       const std::vector<CoveragePoint>& b);

// ---- Shared prefixes ----

// A role marker followed by the whitespace tokens of the message content, its
// tool call and its tool result, for every message.
std::vector<std::string> PrefixTokens(const Trajectory& t);

struct PrefixGroup {
  std::string task_id;
  std::string kind;  // "regular" or "branch"
  std::string root_label;  // empty for regular groups
  std::size_t size = 0;
  double shared_fraction = 0.0;
  bool singleton = false;
};

struct PrefixReport {
  std::vector<PrefixGroup> groups;
  // Means over non-singleton groups; nullopt when there is none.
  std::optional<double> regular_mean;
  std::optional<double> branch_mean;
};

// Mean over members of (longest common prefix with any other member) /
// (member length). A singleton group yields 0.
double GroupSharedFraction(const std::vector<std::vector<std::string>>& members);

// Regular groups: root rollouts of one task. Branch groups: a root rollout
// and every descendant, per task, when at least one descendant exists.
PrefixReport SharedPrefixReport(const std::vector<Trajectory>& pool);

// ---- Diversity ----

struct DiversityRank {
  std::size_t rank = 0;  // 1 = most dissimilar
  double candidate_mean = 0.0;
  std::size_t candidate_n = 0;
  std::optional<double> trajectory_mean;
  std::size_t trajectory_n = 0;
};

struct DiversityReport {
  std::vector<DiversityRank> ranks;
  std::size_t sets = 0;
  std::size_t trajectory_sets = 0;
  // Some set had fewer than three candidates.
  bool short_sets = false;
};

// Mean of per-message embeddings; empty suffix -> empty vector.
std::vector<double> SuffixEmbedding(const std::vector<Message>& suffix, const Embedder& embedder);

// Candidate level uses the stored similarities. Trajectory level compares
// each continuation's suffix embedding with the original suffix's and is
// filled for sets that carry one continuation per candidate.
DiversityReport DiversityRankReport(const std::vector<CandidateRecord>& records,
                                    const Embedder& embedder);

// ---- Overhead ----

struct OverheadInputs {
  double rollout_agent_tokens = 0;
  double branch_agent_tokens = 0;
  double rollout_user_tokens = 0;
  double branch_user_tokens = 0;
  double junction_tokens = 0;
  double candidate_tokens = 0;  // per candidate call
  double candidates_per_branch = 0;
};

struct OverheadReport {
  OverheadInputs inputs;
  double candidate_total = 0;
  double per_branch_overhead = 0;
  double agent_savings = 0;
  double user_savings = 0;
  double gross_savings = 0;
  double net_savings = 0;
  std::size_t rollouts = 0;
  std::size_t branches = 0;
};

// per_branch = junction + K * candidate;
// net = (rollout_agent - branch_agent) + (rollout_user - branch_user) - per_branch.
OverheadReport OverheadArithmetic(const OverheadInputs& inputs);
// Means over the pool (total = prompt + completion tokens): rollouts are
// trajectories without a parent, branches the rest.
OverheadReport OverheadFromPool(const std::vector<Trajectory>& pool,
                                const std::vector<CandidateRecord>& records);

// ---- Intent judge ----

enum class Verdict { kPreserved, kMissed };

// First alphabetic word: YES -> preserved, NO -> missed (any case). Anything
// else throws kUnparseableVerdict.
Verdict ParseJudgeVerdict(std::string_view response);
Verdict JudgeIntent(std::string_view purpose, std::string_view message,
                    const ChatProvider& provider, int max_retries = 3);

struct JudgeSummary {
  std::size_t judged = 0;
  std::size_t preserved = 0;
  std::size_t unparseable = 0;
};

// Judges the injected candidate of every record against its task's purpose.
JudgeSummary JudgeCandidates(const std::vector<CandidateRecord>& records,
                             const std::vector<Task>& suite, const ChatProvider& provider,
                             int max_retries = 3);

// ---- Output ----

// Shortest round-trip decimal form.
std::string FormatDouble(double v);

void WriteMetricsCsv(std::ostream& out, const std::vector<Trajectory>& pool);
void WriteCoverageCsv(std::ostream& out, const std::vector<Trajectory>& pool);
void WritePrefixCsv(std::ostream& out, const PrefixReport& report);
void WriteDiversityCsv(std::ostream& out, const DiversityReport& report);

nlohmann::json MetricsToJson(const MetricsReport& m);
nlohmann::json PrefixToJson(const PrefixReport& p);
nlohmann::json DiversityToJson(const DiversityReport& d);
nlohmann::json OverheadToJson(const OverheadReport& o);

}  // namespace divert

#endif  // DIVERT_ANALYSIS_H_
