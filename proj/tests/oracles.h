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

// Brute-force reference implementations of the pool metrics, written from
// their definitions and sharing no code with the analysis module, plus a
// generator of small random pools with consistent lineage.

#ifndef DIVERT_TESTS_ORACLES_H_
#define DIVERT_TESTS_ORACLES_H_

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "divert/core.h"
#include "json.hpp"

namespace divert::oracle {

inline bool Failed(const Trajectory& t) { return t.outcome.status != OutcomeStatus::kSuccess; }

// nullopt when the pool has no agent completion tokens.
inline std::optional<double> ErrorsPer100k(const std::vector<Trajectory>& pool) {
  long double failures = 0;
  long double tokens = 0;
  for (const Trajectory& t : pool) {
    if (Failed(t)) failures += 1;
    tokens += static_cast<long double>(t.ledger.agent.completion_tokens);
  }
  if (tokens == 0) return std::nullopt;
  return static_cast<double>(failures * 100000.0L / tokens);
}

inline std::int64_t TaskFailureCount(const std::vector<Trajectory>& pool) {
  std::set<std::string> tasks;
  for (const Trajectory& t : pool) {
    if (Failed(t)) tasks.insert(t.task_id);
  }
  return static_cast<std::int64_t>(tasks.size());
}

inline std::uint64_t CostOf(const Trajectory& t) {
  const TokenLedger& l = t.ledger;
  return l.agent.completion_tokens + l.junction_overhead.prompt_tokens +
         l.junction_overhead.completion_tokens + l.candidate_overhead.prompt_tokens +
         l.candidate_overhead.completion_tokens;
}

// Point i recomputed from scratch over the first i + 1 trajectories.
inline std::vector<std::pair<std::uint64_t, std::int64_t>> CoverageCurve(
    const std::vector<Trajectory>& pool) {
  std::vector<std::pair<std::uint64_t, std::int64_t>> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::vector<Trajectory> head(pool.begin(), pool.begin() + i + 1);
    std::uint64_t cost = 0;
    for (const Trajectory& t : head) cost += CostOf(t);
    out.emplace_back(cost, oracle::TaskFailureCount(head));
  }
  return out;
}

// Unique failed tasks among trajectories whose cumulative cost fits in
// `budget`, by walking the pool.
inline std::int64_t CoverageAt(const std::vector<Trajectory>& pool, std::uint64_t budget) {
  std::set<std::string> failed;
  std::uint64_t spent = 0;
  for (const Trajectory& t : pool) {
    spent += CostOf(t);
    if (spent > budget) break;
    if (Failed(t)) failed.insert(t.task_id);
  }
  return static_cast<std::int64_t>(failed.size());
}

inline void AppendWords(const std::string& text, std::vector<std::string>* out) {
  std::istringstream in(text);
  std::string w;
  while (in >> w) out->push_back(w);
}

inline std::vector<std::string> Tokens(const Trajectory& t) {
  std::vector<std::string> out;
  for (const Message& m : t.messages) {
    out.push_back("<" + std::string(RoleName(m.role)) + ">");
    AppendWords(m.content, &out);
    if (m.tool_call) {
      out.push_back(m.tool_call->name);
      nlohmann::json args = nlohmann::json::object();
      for (const auto& [k, v] : m.tool_call->arguments) {
        std::visit([&](const auto& x) { args[k] = x; }, v);
      }
      AppendWords(args.dump(), &out);
    }
    if (m.tool_result) AppendWords(*m.tool_result, &out);
  }
  return out;
}

inline double GroupFraction(const std::vector<std::vector<std::string>>& group) {
  if (group.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < group.size(); ++k) {
      if (k == i) continue;
      std::size_t n = 0;
      while (n < group[i].size() && n < group[k].size() && group[i][n] == group[k][n]) ++n;
      best = std::max(best, n);
    }
    if (!group[i].empty()) total += static_cast<double>(best) / static_cast<double>(group[i].size());
  }
  return total / static_cast<double>(group.size());
}

struct PrefixOracle {
  // (task, kind, root) -> (size, fraction)
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::size_t, double>> groups;
  std::optional<double> regular_mean;
  std::optional<double> branch_mean;
};

inline PrefixOracle SharedPrefix(const std::vector<Trajectory>& pool) {
  std::map<std::string, std::vector<std::vector<std::string>>> regular;
  std::map<std::pair<std::string, std::string>, std::vector<std::vector<std::string>>> family;
  std::map<std::pair<std::string, std::string>, bool> family_has_branch;
  for (const Trajectory& t : pool) {
    const std::string& label = t.lineage.iteration_label;
    std::string root = label;
    if (auto u = label.find('_'); u != std::string::npos) root = label.substr(0, u);
    family[{t.task_id, root}].push_back(Tokens(t));
    if (t.lineage.parent_label) {
      family_has_branch[{t.task_id, root}] = true;
    } else {
      regular[t.task_id].push_back(Tokens(t));
    }
  }
  PrefixOracle out;
  std::vector<double> reg;
  std::vector<double> br;
  for (const auto& [task, members] : regular) {
    double f = GroupFraction(members);
    out.groups[{task, "regular", ""}] = {members.size(), f};
    if (members.size() >= 2) reg.push_back(f);
  }
  for (const auto& [key, members] : family) {
    if (!family_has_branch[key]) continue;
    double f = GroupFraction(members);
    out.groups[{key.first, "branch", key.second}] = {members.size(), f};
    if (members.size() >= 2) br.push_back(f);
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  out.regular_mean = mean(reg);
  out.branch_mean = mean(br);
  return out;
}

// ---- Random pools ----

inline Message RandomPoolMessage(std::mt19937_64& rng, std::size_t index) {
  static const std::vector<std::string> kWords = {"cancel", "O-1", "refund", "please", "ok",
                                                  "where", "$5", "thanks", "hi", "no"};
  Message m;
  m.index = index;
  m.role = static_cast<Role>(rng() % 4);
  for (std::size_t n = rng() % 5; n > 0; --n) {
    if (!m.content.empty()) m.content += rng() % 4 == 0 ? "\n" : " ";
    m.content += kWords[rng() % kWords.size()];
  }
  if (m.role == Role::kAgent && rng() % 3 == 0) {
    m.tool_call = ToolCall{"cancel_order", {{"order_id", std::string("O-1")}}};
  }
  if (m.role == Role::kTool) m.tool_result = "cancel_order ok: cancelled O-1";
  return m;
}

inline TokenUsage RandomPoolUsage(std::mt19937_64& rng, bool allow_zero) {
  if (allow_zero && rng() % 6 == 0) return {};
  return {rng() % 40, rng() % 40};
}

// Up to four tasks with one to three roots each and some branches whose
// messages extend a prefix of their parent. Tasks are interleaved at random
// but each task keeps creation order.
inline std::vector<Trajectory> RandomPool(std::mt19937_64& rng) {
  std::vector<std::vector<Trajectory>> per_task;
  const std::size_t tasks = 1 + rng() % 4;
  for (std::size_t k = 0; k < tasks; ++k) {
    std::vector<Trajectory> seq;
    std::map<std::string, int> children;
    const std::size_t roots = 1 + rng() % 3;
    const std::size_t branches = rng() % 5;
    for (std::size_t i = 0; i < roots + branches; ++i) {
      Trajectory t;
      t.task_id = "task-" + std::to_string(k);
      t.seed = static_cast<std::int64_t>(i);
      std::size_t keep = 0;
      if (i < roots) {
        t.lineage.iteration_label = std::to_string(i + 1);
      } else {
        const Trajectory& parent = seq[rng() % seq.size()];
        const std::string& pl = parent.lineage.iteration_label;
        t.lineage.iteration_label = pl + "_" + std::to_string(++children[pl]);
        t.lineage.parent_label = pl;
        keep = parent.messages.empty() ? 0 : rng() % (parent.messages.size() + 1);
        t.messages.assign(parent.messages.begin(), parent.messages.begin() + keep);
        t.lineage.junction_index = keep;
      }
      for (std::size_t n = rng() % 6; n > 0; --n) {
        t.messages.push_back(RandomPoolMessage(rng, t.messages.size()));
      }
      t.step_count = static_cast<std::int64_t>(t.messages.size());
      t.outcome.status = static_cast<OutcomeStatus>(rng() % 3);
      t.ledger.agent = RandomPoolUsage(rng, true);
      t.ledger.user = RandomPoolUsage(rng, true);
      if (t.lineage.parent_label) {
        t.ledger.junction_overhead = RandomPoolUsage(rng, false);
        t.ledger.candidate_overhead = RandomPoolUsage(rng, false);
      }
      seq.push_back(std::move(t));
    }
    per_task.push_back(std::move(seq));
  }
  std::vector<std::size_t> schedule;
  for (std::size_t k = 0; k < per_task.size(); ++k) schedule.insert(schedule.end(), per_task[k].size(), k);
  std::shuffle(schedule.begin(), schedule.end(), rng);
  std::vector<Trajectory> pool;
  std::vector<std::size_t> next(per_task.size(), 0);
  for (std::size_t k : schedule) pool.push_back(per_task[k][next[k]++]);
  return pool;
}

}  // namespace divert::oracle

#endif  // DIVERT_TESTS_ORACLES_H_
