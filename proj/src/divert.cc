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

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <exception>
#include <thread>

#include "divert/hash.h"
#include "divert/prompts.h"

namespace divert {

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::size_t> UserTurns(const std::vector<Message>& messages) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].role == Role::kUser) out.push_back(i);
  }
  return out;
}

// Case-insensitive search for the last occurrence of `needle`.
std::size_t FindLastKey(std::string_view text, std::string_view needle) {
  if (text.size() < needle.size()) return std::string_view::npos;
  for (std::size_t i = text.size() - needle.size() + 1; i-- > 0;) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size() && match; ++k) {
      match = std::tolower(static_cast<unsigned char>(text[i + k])) ==
              std::tolower(static_cast<unsigned char>(needle[k]));
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

constexpr std::uint64_t kJunctionSalt = 0x6a756e6374696f6eULL;
constexpr std::uint64_t kCandidateSalt = 0x63616e6469646174ULL;
constexpr std::uint64_t kRegenerateSalt = 0x726567656e657261ULL;

}  // namespace

TokenUsage CandidateSet::TotalTokens() const {
  TokenUsage total;
  for (const Candidate& c : candidates) total = AddUsage(total, c.tokens);
  return total;
}

void DivertBudget::Validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::kConfigError, "budget." + field + " " + why);
  };
  if (rollouts < 1) fail("rollouts", "must be >= 1");
  if (branches < 0) fail("branches", "must be >= 0");
  if (candidates < 1) fail("candidates", "must be >= 1");
  if (max_branch_depth < 0) fail("max_branch_depth", "must be >= 0");
}

std::size_t ParseJunctionOutput(std::string_view text,
                                const std::vector<std::size_t>& valid_indices) {
  std::size_t at = FindLastKey(text, "index:");
  if (at == std::string_view::npos) {
    throw Error(ErrorCode::kParseError, "junction output has no 'Index:' field");
  }
  std::string_view rest = text.substr(at + 6);
  while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t' || rest.front() == '*')) {
    rest.remove_prefix(1);
  }
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
  if (ec != std::errc() || ptr == rest.data()) {
    throw Error(ErrorCode::kParseError, "junction output 'Index:' is not an integer");
  }
  if (value < 0 || std::find(valid_indices.begin(), valid_indices.end(),
                             static_cast<std::size_t>(value)) == valid_indices.end()) {
    throw Error(ErrorCode::kInvalidIndex, "junction index " + std::to_string(value) +
                                              " is not a user turn " +
                                              FormatIndexList(valid_indices));
  }
  return static_cast<std::size_t>(value);
}

std::string ParseJunctionReason(std::string_view text) {
  std::size_t at = FindLastKey(text, "reason:");
  if (at == std::string_view::npos) return "";
  std::string_view rest = text.substr(at + 7);
  std::size_t index = FindLastKey(rest, "index:");
  if (index != std::string_view::npos) rest = rest.substr(0, index);
  return std::string(Trim(rest));
}

JunctionDecision ChooseJunction(const std::vector<Message>& messages,
                                std::string_view user_instructions,
                                const ChatProvider& provider, const RunConfig& config,
                                std::uint64_t seed) {
  std::vector<std::size_t> user_turns = UserTurns(messages);
  if (user_turns.empty()) {
    throw Error(ErrorCode::kNoJunction, "trajectory has no user turn");
  }
  ChatRequest request;
  request.messages = {{"system", std::string(kJunctionSystemPrompt)},
                      {"user", RenderJunctionPrompt(user_instructions, messages)}};
  request.temperature = kFrameworkTemperature;
  request.max_retries = config.max_retries;
  request.role_tag = RoleTag::kJunction;
  request.seed = seed;

  JunctionDecision decision;
  std::string failure;
  try {
    ChatResult result = ChatComplete(provider, request);
    decision.overhead = result.tokens;
    decision.index = ParseJunctionOutput(result.content, user_turns);
    decision.reason = ParseJunctionReason(result.content);
    return decision;
  } catch (const ProviderError& e) {
    decision.overhead = e.tokens();
    failure = e.what();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kParseError && e.code() != ErrorCode::kInvalidIndex) throw;
    failure = e.what();
  }
  decision.index = user_turns.back();
  decision.fallback_used = true;
  decision.reason = "fallback to the last user turn (" + failure + ")";
  return decision;
}

CandidateSet GenerateCandidates(const std::vector<Message>& messages, const Task& task,
                                const JunctionDecision& junction, std::size_t k,
                                const ChatProvider& provider, const RunConfig& config,
                                std::uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  if (junction.index >= messages.size() || messages[junction.index].role != Role::kUser) {
    throw Error(ErrorCode::kInvalidIndex,
                "junction " + std::to_string(junction.index) + " is not a user turn");
  }
  CandidateSet set;
  set.original_message = messages[junction.index].content;
  ChatRequest request;
  request.messages = {{"system", RenderCandidateSystem(task)},
                      {"user", RenderCandidatePrompt(junction.index, junction.reason, messages)}};
  request.temperature = kFrameworkTemperature;
  request.max_retries = config.max_retries;
  request.role_tag = RoleTag::kCandidate;
  for (std::size_t i = 0; i < k; ++i) {
    request.seed = HashCombine(seed, i);
    try {
      ChatResult result = ChatComplete(provider, request);
      set.candidates.push_back({std::string(Trim(result.content)), result.tokens, 0.0, 0.0});
    } catch (const ProviderError& e) {
      throw Error(ErrorCode::kCandidateGeneration,
                  "candidate k=" + std::to_string(i) + " of " + std::to_string(k) +
                      " failed: " + e.what());
    }
  }
  return set;
}

CandidateSet SelectMostDivergent(CandidateSet set, const Embedder& embedder) {
  if (set.candidates.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "candidate set is empty");
  }
  if (set.original_message.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "original message is empty");
  }
  UnitVector original = embedder.Embed(set.original_message);
  set.selected_index = 0;
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    Candidate& c = set.candidates[i];
    c.similarity = CosineSimilarity(embedder.Embed(c.text), original);
    c.divergence = 1.0 - c.similarity;
    if (c.similarity < set.candidates[set.selected_index].similarity) set.selected_index = i;
  }
  return set;
}

std::string SnapshotCatalog::Save(const Snapshot& snapshot) {
  Entry entry;
  if (store_ != nullptr) {
    entry.path = store_->Save(snapshot);
  } else {
    entry.path = "mem://" + snapshot.id;
    entry.snapshot = snapshot;
  }
  std::lock_guard<std::mutex> lock(mu_);
  entries_[snapshot.iteration_label][static_cast<std::size_t>(snapshot.step_count)] =
      std::move(entry);
  return entries_[snapshot.iteration_label][static_cast<std::size_t>(snapshot.step_count)].path;
}

void SnapshotCatalog::Inherit(const std::string& child, const std::string& parent,
                              std::size_t below_turn) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(parent);
  if (it == entries_.end()) return;
  auto& target = entries_[child];
  for (const auto& [turn, entry] : it->second) {
    if (turn < below_turn) target.emplace(turn, entry);
  }
}

std::optional<std::pair<std::size_t, Snapshot>> SnapshotCatalog::Find(
    const std::string& label, std::size_t turn) const {
  Entry entry;
  std::size_t found_turn = 0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(label);
    if (it == entries_.end()) return std::nullopt;
    auto at = it->second.upper_bound(turn);
    if (at == it->second.begin()) return std::nullopt;
    --at;
    found_turn = at->first;
    entry = at->second;
  }
  if (entry.snapshot) return std::make_pair(found_turn, *entry.snapshot);
  return std::make_pair(found_turn, LoadSnapshot(entry.path));
}

BranchResult BranchOnce(const Trajectory& parent, const Task& task,
                        const std::string& child_label, SnapshotCatalog& catalog,
                        const Providers& providers, const RunConfig& config,
                        const DivertBudget& budget, const Ablation& ablation) {
  const std::string& parent_label = parent.lineage.iteration_label;
  const std::uint64_t base = HashCombine(static_cast<std::uint64_t>(parent.seed),
                                         Fnv1a64(task.task_id + "/" + child_label));
  BranchResult out;
  out.junction = ChooseJunction(parent.messages, task.user_instructions, *providers.framework,
                                config, HashCombine(base, kJunctionSalt));

  auto found = catalog.Find(parent_label, out.junction.index);
  if (!found) {
    throw Error(ErrorCode::kBranchError,
                "no snapshot of '" + parent_label + "' at or before user turn " +
                    std::to_string(out.junction.index));
  }
  auto& [turn, snapshot] = *found;
  if (turn >= parent.messages.size() || parent.messages[turn].role != Role::kUser) {
    throw Error(ErrorCode::kBranchError,
                "snapshot step " + std::to_string(turn) + " of '" + parent_label +
                    "' does not precede a user turn");
  }
  if (turn != out.junction.index) {
    out.requested_junction = out.junction.index;
    out.junction.index = turn;
  }
  const std::size_t j = turn;
  ExecutionState state = snapshot.execution_state;
  if (state.done || state.messages.size() != j ||
      !std::equal(state.messages.begin(), state.messages.end(), parent.messages.begin())) {
    throw Error(ErrorCode::kBranchError, "snapshot " + snapshot.id +
                                             " does not match the prefix of '" +
                                             parent_label + "'");
  }

  state.lineage = {child_label, parent_label, j, out.junction.reason};
  state.last_snapshot_id = snapshot.id;
  state.pending_message.reset();
  state.pending_augmentation.reset();
  TokenUsage candidate_tokens;
  if (ablation.directed_generation) {
    CandidateSet set = GenerateCandidates(parent.messages, task, out.junction,
                                          static_cast<std::size_t>(budget.candidates),
                                          *providers.framework, config,
                                          HashCombine(base, kCandidateSalt));
    set = SelectMostDivergent(std::move(set), *providers.embedder);
    if (!ablation.diverse_selection) set.selected_index = 0;
    candidate_tokens = set.TotalTokens();
    Message injected;
    injected.role = Role::kUser;
    injected.content = set.candidates[set.selected_index].text;
    state.pending_message = injected;
    state.pending_augmentation =
        Augmentation{set.original_message, injected.content, j, out.junction.reason,
                     AddUsage(out.junction.overhead, candidate_tokens)};
    out.candidates = std::move(set);
  } else {
    // Natural continuation: the user simulator rewrites the turn itself.
    state.seed = static_cast<std::int64_t>(HashCombine(base, kRegenerateSalt) >> 1);
  }

  catalog.Inherit(child_label, parent_label, j);
  ExecutionState final_state = ResumeToCompletion(state, config, providers, &catalog);
  final_state.ledger.junction_overhead =
      AddUsage(final_state.ledger.junction_overhead, out.junction.overhead);
  final_state.ledger.candidate_overhead =
      AddUsage(final_state.ledger.candidate_overhead, candidate_tokens);
  out.trajectory = TrajectoryFromState(final_state);

  if (ablation.probe_continuations && out.candidates) {
    const CandidateSet& set = *out.candidates;
    for (std::size_t k = 0; k < set.candidates.size(); ++k) {
      if (k == set.selected_index) {
        out.continuations.emplace_back(out.trajectory.messages.begin() + j,
                                       out.trajectory.messages.end());
        continue;
      }
      ExecutionState probe = state;
      probe.pending_message->content = set.candidates[k].text;
      probe.pending_augmentation.reset();
      ExecutionState done = ResumeToCompletion(std::move(probe), config, providers, nullptr);
      out.probe_tokens = AddUsage(out.probe_tokens, done.ledger.agent);
      out.probe_tokens = AddUsage(out.probe_tokens, done.ledger.user);
      out.continuations.emplace_back(done.messages.begin() + j, done.messages.end());
    }
  }
  return out;
}

std::pair<std::size_t, std::size_t> RoundRobinNext(std::size_t pool_size, std::size_t cursor) {
  if (pool_size == 0) throw Error(ErrorCode::kInvalidState, "round robin over an empty pool");
  return {cursor % pool_size, cursor + 1};
}

std::int64_t RunReport::BranchFailures() const {
  std::int64_t n = 0;
  for (const TaskReport& t : tasks) n += t.branches_failed;
  return n;
}

nlohmann::json RunReport::ToJson() const {
  nlohmann::json j;
  j["tasks"] = nlohmann::json::array();
  for (const TaskReport& t : tasks) {
    nlohmann::json reasons = nlohmann::json::array();
    for (const BranchFailure& f : t.failures) {
      reasons.push_back({{"parent_label", f.parent_label},
                         {"child_label", f.child_label},
                         {"code", f.code},
                         {"message", f.message}});
    }
    j["tasks"].push_back({{"task_id", t.task_id},
                          {"rollouts", t.rollouts},
                          {"branches_ok", t.branches_ok},
                          {"branches_failed", t.branches_failed},
                          {"reasons", reasons},
                          {"junction_fallbacks", t.junction_fallbacks},
                          {"snapshot_fallbacks", t.snapshot_fallbacks},
                          {"probe_tokens", t.probe_tokens}});
  }
  j["branch_failures"] = BranchFailures();
  return j;
}

namespace {

struct TaskRun {
  std::vector<Trajectory> pool;
  std::vector<CandidateRecord> candidates;
  TaskReport report;
};

bool CanBranchFrom(const Trajectory& t, const DivertBudget& budget) {
  return static_cast<std::int64_t>(LabelDepth(t.lineage.iteration_label)) + 1 <=
         budget.max_branch_depth;
}

std::optional<std::size_t> NextParent(const std::vector<Trajectory>& pool,
                                      const DivertOptions& options, const RunConfig& config,
                                      const Task& task, std::int64_t attempt,
                                      std::size_t* cursor) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (CanBranchFrom(pool[i], options.budget)) eligible.push_back(i);
  }
  if (eligible.empty()) return std::nullopt;
  if (options.ablation.uniform_sampling) {
    DrawStream draws(HashCombine(HashCombine(static_cast<std::uint64_t>(config.seed),
                                             Fnv1a64(task.task_id)),
                                 static_cast<std::uint64_t>(attempt)));
    return eligible[draws.Below(eligible.size())];
  }
  for (std::size_t tries = 0; tries < pool.size(); ++tries) {
    auto [index, next] = RoundRobinNext(pool.size(), *cursor);
    *cursor = next;
    if (CanBranchFrom(pool[index], options.budget)) return index;
  }
  return std::nullopt;
}

TaskRun RunTask(const Task& task, const DivertOptions& options, const RunConfig& config,
                const Providers& providers, SnapshotStore* store) {
  TaskRun run;
  run.report.task_id = task.task_id;
  SnapshotCatalog catalog(store);
  for (std::int64_t r = 1; r <= options.budget.rollouts; ++r) {
    ExecutionState state =
        InitialState(task, config.seed + r - 1, IterationChildLabel("", r));
    run.pool.push_back(
        TrajectoryFromState(RunToCompletion(std::move(state), config, providers, &catalog)));
    ++run.report.rollouts;
  }
  std::map<std::string, std::int64_t> children;
  std::size_t cursor = 0;
  for (std::int64_t b = 0; b < options.budget.branches; ++b) {
    std::optional<std::size_t> parent_index =
        NextParent(run.pool, options, config, task, b, &cursor);
    if (!parent_index) {
      ++run.report.branches_failed;
      run.report.failures.push_back({"", "", std::string(ErrorCodeName(ErrorCode::kBranchError)),
                                     "no trajectory is below max_branch_depth"});
      continue;
    }
    // Copy: the pool may grow while the branch runs.
    const Trajectory parent = run.pool[*parent_index];
    const std::string& parent_label = parent.lineage.iteration_label;
    std::string child = IterationChildLabel(parent_label, ++children[parent_label]);
    try {
      BranchResult result = BranchOnce(parent, task, child, catalog, providers, config,
                                       options.budget, options.ablation);
      if (result.junction.fallback_used) ++run.report.junction_fallbacks;
      if (result.requested_junction) {
        run.report.snapshot_fallbacks.push_back(
            child + ": user turn " + std::to_string(*result.requested_junction) +
            " had no snapshot, used turn " + std::to_string(result.junction.index));
      }
      run.report.probe_tokens = AddUsage(run.report.probe_tokens, result.probe_tokens);
      CandidateRecord record;
      record.task_id = task.task_id;
      record.parent_label = parent_label;
      record.child_label = child;
      record.junction = result.junction;
      record.requested_junction = result.requested_junction;
      if (result.candidates) record.set = *result.candidates;
      record.original_suffix.assign(parent.messages.begin() + result.junction.index,
                                    parent.messages.end());
      record.continuations = std::move(result.continuations);
      run.candidates.push_back(std::move(record));
      run.pool.push_back(std::move(result.trajectory));
      ++run.report.branches_ok;
    } catch (const Error& e) {
      ++run.report.branches_failed;
      run.report.failures.push_back(
          {parent_label, child, std::string(ErrorCodeName(e.code())), e.what()});
    } catch (const std::exception& e) {
      ++run.report.branches_failed;
      run.report.failures.push_back({parent_label, child, "internal", e.what()});
    }
  }
  return run;
}

}  // namespace

DivertResult RunDivert(const std::vector<Task>& suite, const DivertOptions& options,
                       const RunConfig& config, const Providers& providers,
                       SnapshotStore* store) {
  options.budget.Validate();
  config.Validate();
  if (!providers.agent || !providers.user || !providers.framework || !providers.embedder) {
    throw Error(ErrorCode::kInvalidArgument, "every provider slot must be set");
  }
  std::vector<TaskRun> runs(suite.size());
  std::vector<std::exception_ptr> errors(suite.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < suite.size(); i = next.fetch_add(1)) {
      try {
        runs[i] = RunTask(suite[i], options, config, providers, store);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = std::max<std::size_t>(1, std::min(options.parallel, suite.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  DivertResult result;
  for (TaskRun& run : runs) {
    std::move(run.pool.begin(), run.pool.end(), std::back_inserter(result.pool));
    std::move(run.candidates.begin(), run.candidates.end(),
              std::back_inserter(result.candidates));
    result.report.tasks.push_back(std::move(run.report));
  }
  return result;
}

nlohmann::json CandidateRecordToJson(const CandidateRecord& r) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const Candidate& c : r.set.candidates) {
    candidates.push_back({{"text", c.text},
                          {"tokens", c.tokens},
                          {"similarity", c.similarity},
                          {"divergence", c.divergence}});
  }
  nlohmann::json j;
  j["task_id"] = r.task_id;
  j["parent_label"] = r.parent_label;
  j["child_label"] = r.child_label;
  j["junction"] = {{"index", r.junction.index},
                   {"reason", r.junction.reason},
                   {"overhead", r.junction.overhead},
                   {"fallback_used", r.junction.fallback_used}};
  j["requested_junction"] =
      r.requested_junction ? nlohmann::json(*r.requested_junction) : nlohmann::json(nullptr);
  j["original_message"] = r.set.original_message;
  j["selected_index"] = r.set.selected_index;
  j["candidates"] = std::move(candidates);
  j["original_suffix"] = r.original_suffix;
  j["continuations"] = r.continuations;
  return j;
}

CandidateRecord CandidateRecordFromJson(const nlohmann::json& j) {
  try {
    CandidateRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.parent_label = j.at("parent_label").get<std::string>();
    r.child_label = j.at("child_label").get<std::string>();
    const auto& junction = j.at("junction");
    r.junction.index = junction.at("index").get<std::size_t>();
    r.junction.reason = junction.at("reason").get<std::string>();
    r.junction.overhead = junction.at("overhead").get<TokenUsage>();
    r.junction.fallback_used = junction.at("fallback_used").get<bool>();
    if (!j.at("requested_junction").is_null()) {
      r.requested_junction = j["requested_junction"].get<std::size_t>();
    }
    r.set.original_message = j.at("original_message").get<std::string>();
    r.set.selected_index = j.at("selected_index").get<std::size_t>();
    for (const auto& c : j.at("candidates")) {
      r.set.candidates.push_back({c.at("text").get<std::string>(),
                                  c.at("tokens").get<TokenUsage>(),
                                  c.at("similarity").get<double>(),
                                  c.at("divergence").get<double>()});
    }
    r.original_suffix = j.at("original_suffix").get<std::vector<Message>>();
    r.continuations = j.at("continuations").get<std::vector<std::vector<Message>>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("candidate record: ") + e.what());
  }
}

}  // namespace divert
