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

// Junction selection, directed candidate generation, divergence selection and
// budgeted branching from cached snapshots.
//
// Per task: R linear rollouts, then B branch attempts. Each attempt takes the
// next parent in round-robin order over the growing pool, asks the junction
// chooser which user turn to rewrite, generates K replacements for it, keeps
// the one least similar to the original and resumes the snapshot taken right
// before that turn with the replacement injected.

#ifndef DIVERT_DIVERT_H_
#define DIVERT_DIVERT_H_

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divert/core.h"
#include "divert/envsim.h"
#include "divert/execution_state.h"
#include "divert/orchestrator.h"
#include "divert/providers.h"
#include "divert/snapshots.h"
#include "json.hpp"

namespace divert {

inline constexpr double kFrameworkTemperature = 0.7;

struct JunctionDecision {
  std::size_t index = 0;
  std::string reason;
  TokenUsage overhead;
  bool fallback_used = false;

  bool operator==(const JunctionDecision&) const = default;
};

struct Candidate {
  std::string text;
  TokenUsage tokens;
  double similarity = 0.0;
  double divergence = 0.0;  // 1 - similarity

  bool operator==(const Candidate&) const = default;
};

struct CandidateSet {
  std::vector<Candidate> candidates;
  std::size_t selected_index = 0;
  std::string original_message;

  TokenUsage TotalTokens() const;
  bool operator==(const CandidateSet&) const = default;
};

struct DivertBudget {
  std::int64_t rollouts = 1;
  std::int64_t branches = 0;
  std::int64_t candidates = 3;
  std::int64_t max_branch_depth = 3;

  // Throws kConfigError naming the offending field.
  void Validate() const;
  bool operator==(const DivertBudget&) const = default;
};

struct Ablation {
  // Off: the junction turn is regenerated by the user simulator instead.
  bool directed_generation = true;
  // Off: candidate 0 is injected regardless of similarity.
  bool diverse_selection = true;
  // Pick parents uniformly at random instead of round robin.
  bool uniform_sampling = false;
  // Also run the continuation of every non-selected candidate (not added to
  // the pool) so trajectory-level diversity can be measured.
  bool probe_continuations = false;

  bool operator==(const Ablation&) const = default;
};

// Last "Index:" integer in `text`. Throws kParseError when there is none and
// kInvalidIndex when it is not one of `valid_indices`.
std::size_t ParseJunctionOutput(std::string_view text,
                                const std::vector<std::size_t>& valid_indices);
// Text after the last "Reason:" up to the "Index:" line, trimmed.
std::string ParseJunctionReason(std::string_view text);

// Throws kNoJunction when `messages` has no user turn. Parse and provider
// failures fall back to the last user turn.
JunctionDecision ChooseJunction(const std::vector<Message>& messages,
                                std::string_view user_instructions,
                                const ChatProvider& provider, const RunConfig& config,
                                std::uint64_t seed);

// Candidate k is requested with seed HashCombine(seed, k). Throws
// kCandidateGeneration naming k when a call exhausts its retries.
CandidateSet GenerateCandidates(const std::vector<Message>& messages, const Task& task,
                                const JunctionDecision& junction, std::size_t k,
                                const ChatProvider& provider, const RunConfig& config,
                                std::uint64_t seed);

// Fills similarities and divergences; selected_index = argmin similarity,
// lowest index on ties.
CandidateSet SelectMostDivergent(CandidateSet set, const Embedder& embedder);

// Snapshot bookkeeping for one task: (iteration label, user-turn index) ->
// snapshot. A branch inherits its parent's entries before the junction.
class SnapshotCatalog : public SnapshotSink {
 public:
  // `store` may be null, in which case snapshots are kept in memory.
  explicit SnapshotCatalog(SnapshotStore* store) : store_(store) {}

  std::string Save(const Snapshot& snapshot) override;

  void Inherit(const std::string& child, const std::string& parent, std::size_t below_turn);
  // Nearest entry at or before `turn` under `label`.
  std::optional<std::pair<std::size_t, Snapshot>> Find(const std::string& label,
                                                       std::size_t turn) const;

 private:
  struct Entry {
    std::string path;
    std::optional<Snapshot> snapshot;
  };

  SnapshotStore* store_;
  mutable std::mutex mu_;
  std::map<std::string, std::map<std::size_t, Entry>> entries_;
};

struct BranchResult {
  Trajectory trajectory;
  JunctionDecision junction;
  // Turn the chooser picked, when the snapshot lookup had to move it earlier.
  std::optional<std::size_t> requested_junction;
  std::optional<CandidateSet> candidates;
  // Continuation messages (from the junction on) per candidate; empty unless
  // probing is enabled.
  std::vector<std::vector<Message>> continuations;
  TokenUsage probe_tokens;
};

// Throws divert::Error (kBranchError and friends) when the branch cannot be
// produced.
BranchResult BranchOnce(const Trajectory& parent, const Task& task,
                        const std::string& child_label, SnapshotCatalog& catalog,
                        const Providers& providers, const RunConfig& config,
                        const DivertBudget& budget, const Ablation& ablation);

// pool[cursor % |pool|] and cursor + 1. Throws kInvalidState on an empty pool.
std::pair<std::size_t, std::size_t> RoundRobinNext(std::size_t pool_size, std::size_t cursor);

struct CandidateRecord {
  std::string task_id;
  std::string parent_label;
  std::string child_label;
  JunctionDecision junction;
  std::optional<std::size_t> requested_junction;
  CandidateSet set;
  std::vector<Message> original_suffix;
  std::vector<std::vector<Message>> continuations;
};

struct BranchFailure {
  std::string parent_label;
  std::string child_label;
  std::string code;
  std::string message;
};

struct TaskReport {
  std::string task_id;
  std::int64_t rollouts = 0;
  std::int64_t branches_ok = 0;
  std::int64_t branches_failed = 0;
  std::vector<BranchFailure> failures;
  std::int64_t junction_fallbacks = 0;
  std::vector<std::string> snapshot_fallbacks;
  TokenUsage probe_tokens;
};

struct RunReport {
  std::vector<TaskReport> tasks;

  std::int64_t BranchFailures() const;
  nlohmann::json ToJson() const;
};

struct DivertOptions {
  DivertBudget budget;
  Ablation ablation;
  std::size_t parallel = 1;
};

struct DivertResult {
  // Creation order within each task; tasks in suite order.
  std::vector<Trajectory> pool;
  std::vector<CandidateRecord> candidates;
  RunReport report;
};

// Tasks run concurrently on up to `options.parallel` threads; the result does
// not depend on the thread count. `store` may be null.
DivertResult RunDivert(const std::vector<Task>& suite, const DivertOptions& options,
                       const RunConfig& config, const Providers& providers,
                       SnapshotStore* store);

nlohmann::json CandidateRecordToJson(const CandidateRecord& record);
CandidateRecord CandidateRecordFromJson(const nlohmann::json& j);

}  // namespace divert

#endif  // DIVERT_DIVERT_H_
