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

#include "divert/analysis.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <numeric>
#include <set>

#include "divert/hash.h"
#include "divert/prompts.h"

namespace divert {

std::uint64_t AgentTokens(const Trajectory& t) { return t.ledger.agent.completion_tokens; }

std::uint64_t OverheadTokens(const Trajectory& t) { return t.ledger.overhead().total(); }

double ErrorsPer100k(const std::vector<Trajectory>& pool) {
  std::uint64_t tokens = 0;
  std::int64_t failures = 0;
  for (const Trajectory& t : pool) {
    tokens += AgentTokens(t);
    if (t.outcome.failed()) ++failures;
  }
  if (tokens == 0) {
    throw Error(ErrorCode::kUndefinedMetric, "errors_per_100k needs agent tokens > 0");
  }
  return static_cast<double>(failures) / static_cast<double>(tokens) * 100000.0;
}

std::int64_t TaskFailureCount(const std::vector<Trajectory>& pool) {
  std::set<std::string> failed;
  for (const Trajectory& t : pool) {
    if (t.outcome.failed()) failed.insert(t.task_id);
  }
  return static_cast<std::int64_t>(failed.size());
}

MetricsReport ComputeMetrics(const std::vector<Trajectory>& pool) {
  MetricsReport m;
  std::map<std::string, std::size_t> slot;
  for (const Trajectory& t : pool) {
    auto [it, inserted] = slot.emplace(t.task_id, m.per_task.size());
    if (inserted) m.per_task.push_back({t.task_id});
    TaskMetrics& task = m.per_task[it->second];
    ++task.trajectories;
    task.agent_tokens += AgentTokens(t);
    task.overhead_tokens += OverheadTokens(t);
    if (t.outcome.failed()) {
      ++task.failures;
      ++m.failed_trajectories;
    }
    ++m.trajectories;
    m.total_agent_tokens += AgentTokens(t);
    m.total_agent_prompt_tokens += t.ledger.agent.prompt_tokens;
    m.total_user_tokens += t.ledger.user.total();
    m.total_overhead_tokens += OverheadTokens(t);
    m.total_tokens += t.ledger.agent.total() + t.ledger.user.total() + OverheadTokens(t);
  }
  m.task_failure_count = TaskFailureCount(pool);
  if (m.total_agent_tokens > 0) m.errors_per_100k = ErrorsPer100k(pool);
  return m;
}

std::vector<CoveragePoint> CoverageCurve(const std::vector<Trajectory>& pool) {
  std::vector<CoveragePoint> curve;
  std::set<std::string> failed;
  std::uint64_t tokens = 0;
  for (const Trajectory& t : pool) {
    tokens += AgentTokens(t) + OverheadTokens(t);
    if (t.outcome.failed()) failed.insert(t.task_id);
    curve.push_back({tokens, static_cast<std::int64_t>(failed.size())});
  }
  return curve;
}

std::int64_t CoverageAt(const std::vector<CoveragePoint>& curve, std::uint64_t budget) {
  std::int64_t value = 0;
  for (const CoveragePoint& p : curve) {
    if (p.cumulative_tokens > budget) break;
    value = p.unique_failed_tasks;
  }
  return value;
}

bool CoverageDominates(const std::vector<CoveragePoint>& a,
                       const std::vector<CoveragePoint>& b) {
  // Both are step functions, so checking every breakpoint of either suffices.
  std::vector<std::uint64_t> budgets = {0};
  for (const auto& p : a) budgets.push_back(p.cumulative_tokens);
  for (const auto& p : b) budgets.push_back(p.cumulative_tokens);
  return std::all_of(budgets.begin(), budgets.end(), [&](std::uint64_t x) {
    return CoverageAt(a, x) >= CoverageAt(b, x);
  });
}

std::vector<std::string> PrefixTokens(const Trajectory& t) {
  std::vector<std::string> out;
  for (const Message& m : t.messages) {
    out.push_back("<" + std::string(RoleName(m.role)) + ">");
    for (auto& w : WhitespaceTokens(m.content)) out.push_back(std::move(w));
    if (m.tool_call) {
      out.push_back(m.tool_call->name);
      for (auto& w : WhitespaceTokens(nlohmann::json(m.tool_call->arguments).dump())) {
        out.push_back(std::move(w));
      }
    }
    if (m.tool_result) {
      for (auto& w : WhitespaceTokens(*m.tool_result)) out.push_back(std::move(w));
    }
  }
  return out;
}

namespace {

std::size_t CommonPrefix(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

std::string RootOf(const std::string& label) { return label.substr(0, label.find('_')); }

}  // namespace

double GroupSharedFraction(const std::vector<std::vector<std::string>>& members) {
  if (members.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].empty()) continue;
    std::size_t best = 0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k != i) best = std::max(best, CommonPrefix(members[i], members[k]));
    }
    sum += static_cast<double>(best) / static_cast<double>(members[i].size());
  }
  return sum / static_cast<double>(members.size());
}

PrefixReport SharedPrefixReport(const std::vector<Trajectory>& pool) {
  // Keyed by first appearance to keep the output in pool order.
  std::vector<std::string> task_order;
  std::map<std::string, std::vector<const Trajectory*>> by_task;
  for (const Trajectory& t : pool) {
    if (by_task.find(t.task_id) == by_task.end()) task_order.push_back(t.task_id);
    by_task[t.task_id].push_back(&t);
  }
  PrefixReport report;
  std::vector<double> regular;
  std::vector<double> branch;
  for (const std::string& task : task_order) {
    const auto& members = by_task[task];
    std::vector<std::vector<std::string>> roots;
    std::vector<std::string> root_order;
    std::map<std::string, std::vector<const Trajectory*>> families;
    for (const Trajectory* t : members) {
      const std::string& label = t->lineage.iteration_label;
      if (!t->lineage.parent_label) {
        roots.push_back(PrefixTokens(*t));
        if (families.find(label) == families.end()) root_order.push_back(label);
        families[label].insert(families[label].begin(), t);
      } else {
        std::string root = RootOf(label);
        if (families.find(root) == families.end()) root_order.push_back(root);
        families[root].push_back(t);
      }
    }
    if (!roots.empty()) {
      PrefixGroup g{task, "regular", "", roots.size(), GroupSharedFraction(roots),
                    roots.size() < 2};
      if (!g.singleton) regular.push_back(g.shared_fraction);
      report.groups.push_back(std::move(g));
    }
    for (const std::string& root : root_order) {
      const auto& family = families[root];
      bool has_branch = std::any_of(family.begin(), family.end(), [](const Trajectory* t) {
        return t->lineage.parent_label.has_value();
      });
      if (!has_branch) continue;
      std::vector<std::vector<std::string>> tokens;
      for (const Trajectory* t : family) tokens.push_back(PrefixTokens(*t));
      PrefixGroup g{task, "branch", root, tokens.size(), GroupSharedFraction(tokens),
                    tokens.size() < 2};
      if (!g.singleton) branch.push_back(g.shared_fraction);
      report.groups.push_back(std::move(g));
    }
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  report.regular_mean = mean(regular);
  report.branch_mean = mean(branch);
  return report;
}

namespace {

std::string MessageText(const Message& m) {
  std::string text = m.content;
  if (m.tool_call) text += " " + ToolDirectiveLine(*m.tool_call);
  if (m.tool_result) text += " " + *m.tool_result;
  return text;
}

}  // namespace

std::vector<double> SuffixEmbedding(const std::vector<Message>& suffix,
                                    const Embedder& embedder) {
  if (suffix.empty()) return {};
  std::vector<double> mean(embedder.dimension(), 0.0);
  for (const Message& m : suffix) {
    UnitVector v = embedder.Embed(MessageText(m));
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v.components[i];
  }
  for (double& x : mean) x /= static_cast<double>(suffix.size());
  return mean;
}

DiversityReport DiversityRankReport(const std::vector<CandidateRecord>& records,
                                    const Embedder& embedder) {
  DiversityReport report;
  std::vector<double> cand_sum;
  std::vector<std::size_t> cand_n;
  std::vector<double> traj_sum;
  std::vector<std::size_t> traj_n;
  for (const CandidateRecord& r : records) {
    const auto& cands = r.set.candidates;
    if (cands.empty()) continue;
    ++report.sets;
    if (cands.size() < 3) report.short_sets = true;
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cands[a].similarity < cands[b].similarity;
    });
    if (cand_sum.size() < order.size()) {
      cand_sum.resize(order.size(), 0.0);
      cand_n.resize(order.size(), 0);
      traj_sum.resize(order.size(), 0.0);
      traj_n.resize(order.size(), 0);
    }
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      cand_sum[rank] += cands[order[rank]].similarity;
      ++cand_n[rank];
    }
    if (r.continuations.size() != cands.size() || r.original_suffix.empty()) continue;
    ++report.trajectory_sets;
    std::vector<double> original = SuffixEmbedding(r.original_suffix, embedder);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      std::vector<double> cont = SuffixEmbedding(r.continuations[order[rank]], embedder);
      traj_sum[rank] += cont.empty() ? 0.0 : CosineOfVectors(cont, original);
      ++traj_n[rank];
    }
  }
  for (std::size_t rank = 0; rank < cand_sum.size(); ++rank) {
    DiversityRank d;
    d.rank = rank + 1;
    d.candidate_n = cand_n[rank];
    d.candidate_mean = cand_sum[rank] / static_cast<double>(cand_n[rank]);
    d.trajectory_n = traj_n[rank];
    if (traj_n[rank] > 0) d.trajectory_mean = traj_sum[rank] / static_cast<double>(traj_n[rank]);
    report.ranks.push_back(d);
  }
  return report;
}

OverheadReport OverheadArithmetic(const OverheadInputs& in) {
  OverheadReport o;
  o.inputs = in;
  o.candidate_total = in.candidates_per_branch * in.candidate_tokens;
  o.per_branch_overhead = in.junction_tokens + o.candidate_total;
  o.agent_savings = in.rollout_agent_tokens - in.branch_agent_tokens;
  o.user_savings = in.rollout_user_tokens - in.branch_user_tokens;
  o.gross_savings = o.agent_savings + o.user_savings;
  o.net_savings = o.gross_savings - o.per_branch_overhead;
  return o;
}

OverheadReport OverheadFromPool(const std::vector<Trajectory>& pool,
                                const std::vector<CandidateRecord>& records) {
  double rollout_agent = 0, rollout_user = 0, branch_agent = 0, branch_user = 0;
  double junction = 0, candidate = 0, candidate_calls = 0;
  std::size_t rollouts = 0, branches = 0;
  for (const Trajectory& t : pool) {
    if (t.lineage.parent_label) {
      ++branches;
      branch_agent += static_cast<double>(t.ledger.agent.total());
      branch_user += static_cast<double>(t.ledger.user.total());
      junction += static_cast<double>(t.ledger.junction_overhead.total());
    } else {
      ++rollouts;
      rollout_agent += static_cast<double>(t.ledger.agent.total());
      rollout_user += static_cast<double>(t.ledger.user.total());
    }
  }
  for (const CandidateRecord& r : records) {
    for (const Candidate& c : r.set.candidates) {
      candidate += static_cast<double>(c.tokens.total());
      candidate_calls += 1;
    }
  }
  auto mean = [](double sum, double n) { return n > 0 ? sum / n : 0.0; };
  OverheadInputs in;
  in.rollout_agent_tokens = mean(rollout_agent, static_cast<double>(rollouts));
  in.rollout_user_tokens = mean(rollout_user, static_cast<double>(rollouts));
  in.branch_agent_tokens = mean(branch_agent, static_cast<double>(branches));
  in.branch_user_tokens = mean(branch_user, static_cast<double>(branches));
  in.junction_tokens = mean(junction, static_cast<double>(branches));
  in.candidate_tokens = mean(candidate, candidate_calls);
  in.candidates_per_branch = mean(candidate_calls, static_cast<double>(records.size()));
  OverheadReport o = OverheadArithmetic(in);
  o.rollouts = rollouts;
  o.branches = branches;
  return o;
}

Verdict ParseJudgeVerdict(std::string_view response) {
  std::size_t i = 0;
  while (i < response.size() && !std::isalpha(static_cast<unsigned char>(response[i]))) ++i;
  std::string word;
  while (i < response.size() && std::isalpha(static_cast<unsigned char>(response[i]))) {
    word.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(response[i++]))));
  }
  if (word == "YES") return Verdict::kPreserved;
  if (word == "NO") return Verdict::kMissed;
  throw Error(ErrorCode::kUnparseableVerdict,
              "judge response does not start with YES or NO: '" +
                  std::string(response.substr(0, 40)) + "'");
}

Verdict JudgeIntent(std::string_view purpose, std::string_view message,
                    const ChatProvider& provider, int max_retries) {
  if (purpose.empty()) throw Error(ErrorCode::kInvalidArgument, "judge purpose is empty");
  ChatRequest request;
  request.messages = {{"system", std::string(kJudgeSystemPrompt)},
                      {"user", RenderJudgePrompt(purpose, message)}};
  request.temperature = 0.0;
  request.max_retries = max_retries;
  request.role_tag = RoleTag::kJudge;
  request.seed = Fnv1a64(message, Fnv1a64(purpose));
  return ParseJudgeVerdict(ChatComplete(provider, request).content);
}

JudgeSummary JudgeCandidates(const std::vector<CandidateRecord>& records,
                             const std::vector<Task>& suite, const ChatProvider& provider,
                             int max_retries) {
  std::map<std::string, const Task*> tasks;
  for (const Task& t : suite) tasks[t.task_id] = &t;
  JudgeSummary s;
  for (const CandidateRecord& r : records) {
    if (r.set.candidates.empty()) continue;
    auto it = tasks.find(r.task_id);
    if (it == tasks.end()) {
      throw Error(ErrorCode::kInvalidArgument, "unknown task '" + r.task_id + "'");
    }
    ++s.judged;
    try {
      if (JudgeIntent(it->second->purpose, r.set.candidates[r.set.selected_index].text,
                      provider, max_retries) == Verdict::kPreserved) {
        ++s.preserved;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnparseableVerdict) throw;
      ++s.unparseable;
    }
  }
  return s;
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

// Quotes a CSV field when needed.
std::string Csv(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void WriteMetricsCsv(std::ostream& out, const std::vector<Trajectory>& pool) {
  out << "task_id,outcome,agent_tokens,overhead_tokens,lineage,parent_lineage,"
         "junction_index,termination_reason,agent_prompt_tokens,user_tokens,total_tokens,"
         "steps,errors\n";
  for (const Trajectory& t : pool) {
    out << Csv(t.task_id) << ',' << OutcomeStatusName(t.outcome.status) << ','
        << AgentTokens(t) << ',' << OverheadTokens(t) << ','
        << Csv(t.lineage.iteration_label) << ',' << Csv(t.lineage.parent_label.value_or(""))
        << ','
        << (t.lineage.junction_index ? std::to_string(*t.lineage.junction_index) : "") << ','
        << TerminationReasonName(t.outcome.termination_reason) << ','
        << t.ledger.agent.prompt_tokens << ',' << t.ledger.user.total() << ','
        << t.ledger.agent.total() + t.ledger.user.total() + OverheadTokens(t) << ','
        << t.step_count << ',' << t.error_count << '\n';
  }
}

void WriteCoverageCsv(std::ostream& out, const std::vector<Trajectory>& pool) {
  out << "index,task_id,lineage,cumulative_tokens,unique_failed_tasks\n";
  std::vector<CoveragePoint> curve = CoverageCurve(pool);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << i << ',' << Csv(pool[i].task_id) << ',' << Csv(pool[i].lineage.iteration_label)
        << ',' << curve[i].cumulative_tokens << ',' << curve[i].unique_failed_tasks << '\n';
  }
}

void WritePrefixCsv(std::ostream& out, const PrefixReport& report) {
  out << "task_id,kind,root,size,shared_fraction,singleton\n";
  for (const PrefixGroup& g : report.groups) {
    out << Csv(g.task_id) << ',' << g.kind << ',' << Csv(g.root_label) << ',' << g.size << ','
        << FormatDouble(g.shared_fraction) << ',' << (g.singleton ? 1 : 0) << '\n';
  }
}

void WriteDiversityCsv(std::ostream& out, const DiversityReport& report) {
  out << "level,rank,mean_similarity,n\n";
  for (const DiversityRank& r : report.ranks) {
    out << "candidate," << r.rank << ',' << FormatDouble(r.candidate_mean) << ','
        << r.candidate_n << '\n';
  }
  for (const DiversityRank& r : report.ranks) {
    if (!r.trajectory_mean) continue;
    out << "trajectory," << r.rank << ',' << FormatDouble(*r.trajectory_mean) << ','
        << r.trajectory_n << '\n';
  }
}

nlohmann::json MetricsToJson(const MetricsReport& m) {
  nlohmann::json per_task = nlohmann::json::array();
  for (const TaskMetrics& t : m.per_task) {
    per_task.push_back({{"task_id", t.task_id},
                        {"trajectories", t.trajectories},
                        {"failures", t.failures},
                        {"agent_tokens", t.agent_tokens},
                        {"overhead_tokens", t.overhead_tokens}});
  }
  return {{"errors_per_100k", m.errors_per_100k},
          {"task_failure_count", m.task_failure_count},
          {"failed_trajectories", m.failed_trajectories},
          {"trajectories", m.trajectories},
          {"total_agent_tokens", m.total_agent_tokens},
          {"total_agent_prompt_tokens", m.total_agent_prompt_tokens},
          {"total_user_tokens", m.total_user_tokens},
          {"total_overhead_tokens", m.total_overhead_tokens},
          {"total_tokens", m.total_tokens},
          {"incomplete_counted_as_failure", true},
          {"per_task", per_task}};
}

nlohmann::json PrefixToJson(const PrefixReport& p) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  std::size_t singletons = static_cast<std::size_t>(std::count_if(
      p.groups.begin(), p.groups.end(), [](const PrefixGroup& g) { return g.singleton; }));
  return {{"regular_mean", opt(p.regular_mean)},
          {"branch_mean", opt(p.branch_mean)},
          {"groups", p.groups.size()},
          {"singleton_groups", singletons}};
}

nlohmann::json DiversityToJson(const DiversityReport& d) {
  nlohmann::json ranks = nlohmann::json::array();
  for (const DiversityRank& r : d.ranks) {
    ranks.push_back({{"rank", r.rank},
                     {"candidate_mean", r.candidate_mean},
                     {"candidate_n", r.candidate_n},
                     {"trajectory_mean", r.trajectory_mean ? nlohmann::json(*r.trajectory_mean)
                                                           : nlohmann::json(nullptr)},
                     {"trajectory_n", r.trajectory_n}});
  }
  return {{"sets", d.sets},
          {"trajectory_sets", d.trajectory_sets},
          {"short_sets", d.short_sets},
          {"ranks", ranks}};
}

nlohmann::json OverheadToJson(const OverheadReport& o) {
  return {{"rollouts", o.rollouts},
          {"branches", o.branches},
          {"mean_rollout_agent_tokens", o.inputs.rollout_agent_tokens},
          {"mean_branch_agent_tokens", o.inputs.branch_agent_tokens},
          {"mean_rollout_user_tokens", o.inputs.rollout_user_tokens},
          {"mean_branch_user_tokens", o.inputs.branch_user_tokens},
          {"mean_junction_tokens", o.inputs.junction_tokens},
          {"mean_candidate_tokens", o.inputs.candidate_tokens},
          {"candidates_per_branch", o.inputs.candidates_per_branch},
          {"per_branch_overhead", o.per_branch_overhead},
          {"gross_savings", o.gross_savings},
          {"net_savings", o.net_savings}};
}

}  // namespace divert
