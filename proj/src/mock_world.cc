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

#include "divert/mock_world.h"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "divert/hash.h"
#include "divert/prompts.h"
#include "json.hpp"

namespace divert {

namespace {

constexpr std::string_view kAnythingElse = "Anything else?";

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool Contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

bool ContainsAny(std::string_view haystack, std::initializer_list<std::string_view> needles) {
  return std::any_of(needles.begin(), needles.end(),
                     [&](std::string_view n) { return Contains(haystack, n); });
}

bool StartsWith(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::optional<std::int64_t> ParseInt(std::string_view digits) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

std::size_t DigitRun(std::string_view s, std::size_t from) {
  std::size_t end = from;
  while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
  return end;
}

// "$40" first, then "40 dollars".
std::optional<std::int64_t> FindAmount(std::string_view text) {
  for (std::size_t i = text.find('$'); i != std::string_view::npos;
       i = text.find('$', i + 1)) {
    std::size_t end = DigitRun(text, i + 1);
    if (end > i + 1) return ParseInt(text.substr(i + 1, end - i - 1));
  }
  std::string lower = Lower(text);
  for (std::size_t i = lower.find(" dollar"); i != std::string::npos;
       i = lower.find(" dollar", i + 1)) {
    std::size_t start = i;
    while (start > 0 && std::isdigit(static_cast<unsigned char>(lower[start - 1]))) --start;
    if (start < i) return ParseInt(std::string_view(lower).substr(start, i - start));
  }
  return std::nullopt;
}

std::string ReplaceAll(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string Pick(const std::vector<std::string>& bank, DrawStream& draws) {
  return bank[draws.Below(bank.size())];
}

// ---- Agent ------------------------------------------------------------------

std::string ToolLine(std::string_view name, const nlohmann::json& args) {
  return std::string(kToolDirective) + " " + std::string(name) + " " + args.dump();
}

std::string SummarizeToolResult(std::string_view body) {
  // body: "<tool> ok|error: <payload>"
  std::size_t space = body.find(' ');
  std::size_t colon = body.find(": ");
  if (space == std::string_view::npos || colon == std::string_view::npos || colon < space) {
    return "Sorry, something went wrong on my side. Anything else?";
  }
  std::string_view tool = body.substr(0, space);
  std::string_view status = body.substr(space + 1, colon - space - 1);
  std::string_view payload = body.substr(colon + 2);
  if (status != "ok") {
    return "Sorry, I could not complete that: " + std::string(payload) + ". Anything else?";
  }
  std::string id = FindOrderId(payload).value_or("your order");
  if (tool == "cancel_order") return "Order " + id + " has been cancelled. Anything else?";
  if (tool == "escalate") {
    return "Order " + id + " has been escalated to a specialist. Anything else?";
  }
  if (tool == "apply_refund") {
    std::string amount = "the requested amount";
    std::size_t end = DigitRun(payload, 9);
    if (StartsWith(payload, "refunded ") && end > 9) {
      amount = "$" + std::string(payload.substr(9, end - 9));
    }
    return "A refund of " + amount + " has been issued on order " + id +
           ". Anything else?";
  }
  if (tool == "lookup_order") {
    nlohmann::json record = nlohmann::json::parse(payload, nullptr, false);
    if (record.is_object()) {
      std::string item = record.value("item", std::string("item"));
      std::string state = record.value("status", std::string("unknown"));
      return "Order " + id + " (" + item + ") is currently " + state + ". Anything else?";
    }
  }
  return "Done: " + std::string(payload) + ". Anything else?";
}

std::string RespondToCustomer(const std::vector<ChatMessage>& messages) {
  const std::string& text = messages.back().content;
  std::string lower = Lower(text);
  std::optional<std::string> id = FindOrderId(text);
  for (auto it = messages.rbegin(); !id && it != messages.rend(); ++it) {
    if (it->role == "user") id = FindOrderId(it->content);
  }
  std::optional<std::int64_t> amount = FindAmount(text);

  std::string intent;
  if (Contains(lower, "cancel")) {
    intent = "cancel";  // checked first, negated or not
  } else if (ContainsAny(lower, {"refund", "reimburs", "money back"}) ||
             (amount && Contains(lower, " back"))) {
    intent = "refund";
  } else if (ContainsAny(lower, {"escalat", "specialist", "manager", "supervisor",
                                 "someone senior", "damaged", "broken", "cracked"})) {
    intent = "escalate";
  } else if (ContainsAny(lower, {"status", "where", "track", "check", "shipped",
                                 "arrive", "on its way"})) {
    intent = "status";
  }
  if (intent.empty()) return "How can I help you with your order today?";
  if (!id) return "Could you share your order number?";
  nlohmann::json args = {{"order_id", *id}};
  // Like a chat model, the agent restates what it was asked before acting.
  const std::string heard = "You wrote: \"" + text + "\" ";
  if (intent == "cancel") {
    return heard + "I'll cancel that order for you.\n" + ToolLine("cancel_order", args);
  }
  if (intent == "escalate") {
    return heard + "I'll escalate this to a specialist.\n" + ToolLine("escalate", args);
  }
  if (intent == "status") return heard + "Let me look that up.\n" + ToolLine("lookup_order", args);
  if (!amount) {
    // Earlier customer messages may have named the amount.
    for (auto it = messages.rbegin(); !amount && it != messages.rend(); ++it) {
      if (it->role == "user" && !StartsWith(it->content, kToolResultPrefix)) {
        amount = FindAmount(it->content);
      }
    }
  }
  if (!amount) return "How much should I refund on order " + *id + "?";
  args["amount"] = *amount;
  return heard + "Let me process that refund.\n" + ToolLine("apply_refund", args);
}

// ---- User -------------------------------------------------------------------

const std::vector<std::string>& Openers() {
  static const std::vector<std::string> kOpeners = {
      "Hi,", "Hello,", "Hey,", "Good morning,", "Good afternoon,", "Greetings,",
      "Hiya,", "Quick one:", "Evening,", "Morning,", "So,", "Okay,",
      "Um,", "Right,", "Well,", "Howdy,", "Excuse me,", "Sorry to bother you,",
      "Listen,", "Ahoy,", "Salutations,", "Pardon me,", "Alright,", "Heya,"};
  return kOpeners;
}

const std::vector<std::string>& GreetingsOnly() {
  static const std::vector<std::string> kGreetings = {
      "Hello there!", "Hi, anyone around?", "Good morning.", "Hey, quick question.",
      "Is this customer support?", "Greetings, I need some help."};
  return kGreetings;
}

const std::vector<std::string>& DoneMessages() {
  static const std::vector<std::string> kDone = {
      "That's all, thank you! ###DONE###", "Great, that covers everything. ###DONE###",
      "Perfect, thanks for the help. ###DONE###", "Wonderful, I'm all set. ###DONE###"};
  return kDone;
}

std::string RequestFor(const Goal& goal, bool divergent, DrawStream& draws) {
  const auto& bank = divergent ? DivergentPhrasings(goal.kind) : CooperativePhrasings(goal.kind);
  return FillPhrasing(Pick(bank, draws), goal);
}

std::string AmountText(const Goal& goal) {
  if (goal.amount) return "$" + std::to_string(*goal.amount) + ", please.";
  return "The full amount, please.";
}

}  // namespace

std::string_view UserStyleName(UserStyle style) {
  switch (style) {
    case UserStyle::kCooperative:
      return "cooperative";
    case UserStyle::kStochastic:
      return "stochastic";
    case UserStyle::kNeverConclude:
      return "never_conclude";
  }
  return "cooperative";
}

UserStyle ParseUserStyle(std::string_view name) {
  for (UserStyle s : {UserStyle::kCooperative, UserStyle::kStochastic, UserStyle::kNeverConclude}) {
    if (UserStyleName(s) == name) return s;
  }
  throw Error(ErrorCode::kConfigError, "unknown user style '" + std::string(name) + "'");
}

std::vector<Goal> ParseGoals(std::string_view instructions) {
  std::vector<Goal> goals;
  std::size_t pos = 0;
  while (pos <= instructions.size()) {
    std::size_t eol = instructions.find('\n', pos);
    std::string_view line = instructions.substr(
        pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    constexpr std::string_view kPrefix = "Goal: ";
    if (StartsWith(line, kPrefix)) {
      std::vector<std::string> words = WhitespaceTokens(line.substr(kPrefix.size()));
      if (words.size() >= 2) {
        Goal g{words[0], words[1], std::nullopt};
        if (words.size() >= 3) g.amount = ParseInt(words[2]);
        goals.push_back(std::move(g));
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return goals;
}

std::optional<std::string> FindOrderId(std::string_view text) {
  for (std::size_t i = text.find("O-"); i != std::string_view::npos;
       i = text.find("O-", i + 1)) {
    std::size_t end = DigitRun(text, i + 2);
    if (end > i + 2) return std::string(text.substr(i, end - i));
  }
  return std::nullopt;
}

bool AcknowledgesGoal(std::string_view agent_text, const Goal& goal) {
  // Only result summaries count; a restated request is not a confirmation.
  if (!Contains(agent_text, kAnythingElse) || !Contains(agent_text, goal.order_id)) return false;
  if (goal.kind == "cancel") return Contains(agent_text, "has been cancelled");
  if (goal.kind == "refund") return Contains(agent_text, "refund of $");
  if (goal.kind == "status") return Contains(agent_text, "is currently");
  if (goal.kind == "escalate") return Contains(agent_text, "escalated");
  return false;
}

const std::vector<std::string>& CooperativePhrasings(std::string_view kind) {
  static const std::map<std::string, std::vector<std::string>, std::less<>> kBanks = {
      {"cancel",
       {"Please cancel order {id}.", "I need to cancel my order {id}, I no longer need it.",
        "Can you cancel {id} for me?"}},
      {"refund",
       {"I'd like a refund of {amount} on order {id}.", "Could you refund {amount} for order {id}?",
        "Please issue a {amount} refund on order {id}."}},
      {"status",
       {"What is the status of order {id}?", "Can you check where order {id} is?",
        "Could you track order {id} for me?"}},
      {"escalate",
       {"Please escalate order {id} to a specialist.",
        "I'd like order {id} escalated, it arrived damaged.",
        "Can a specialist take over order {id}? Please escalate it."}},
  };
  auto it = kBanks.find(kind);
  if (it == kBanks.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown goal kind '" + std::string(kind) + "'");
  }
  return it->second;
}

const std::vector<std::string>& DivergentPhrasings(std::string_view kind) {
  static const std::map<std::string, std::vector<std::string>, std::less<>> kBanks = {
      {"cancel",
       {"Order {id} is no longer needed, please stop it before it ships.",
        "Scrap {id} entirely, I found the same thing locally.",
        "I changed my mind about {id}; call the whole thing off.",
        "Can you look up {id} and cancel it if it is still open?"}},
      {"refund",
       {"I don't want to cancel order {id}, I just want my {amount} back.",
        "Keep order {id} as it is, no cancellation, just reimburse {amount}.",
        "Without cancelling {id}, can I get {amount} back?",
        "Return {amount} to my card for {id} please."}},
      {"status",
       {"Is {id} still on its way? I have not heard anything.",
        "Any news on {id}? Where is it now?",
        "I'm worried {id} got lost, can you track it down?",
        "I am not asking to cancel {id}, only to know where it is."}},
      {"escalate",
       {"The screen on {id} is cracked and I want someone senior to handle it.",
        "Nobody has fixed {id} yet, get me a manager.",
        "Please do not cancel {id}, I want a specialist to look at the damage.",
        "This is unacceptable for {id}, I need a supervisor."}},
  };
  auto it = kBanks.find(kind);
  if (it == kBanks.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown goal kind '" + std::string(kind) + "'");
  }
  return it->second;
}

std::string FillPhrasing(std::string_view tmpl, const Goal& goal) {
  std::string amount = goal.amount ? "$" + std::to_string(*goal.amount) : "the full amount";
  return ReplaceAll(ReplaceAll(std::string(tmpl), "{id}", goal.order_id), "{amount}", amount);
}

std::string MockAgentReply(const ChatRequest& request) {
  if (request.messages.empty() || request.messages.back().role != "user") {
    return "How can I help you with your order today?";
  }
  const std::string& last = request.messages.back().content;
  std::string prefix = std::string(kToolResultPrefix) + " ";
  if (StartsWith(last, prefix)) return SummarizeToolResult(std::string_view(last).substr(prefix.size()));
  return RespondToCustomer(request.messages);
}

std::string MockUserReply(const ChatRequest& request, std::uint64_t draw, UserStyle style) {
  DrawStream draws(draw);
  std::vector<Goal> goals;
  std::vector<std::string> agent_turns;
  std::size_t own_turns = 0;
  bool agent_spoke_last = false;
  for (const ChatMessage& m : request.messages) {
    if (m.role == "system") {
      for (Goal& g : ParseGoals(m.content)) goals.push_back(std::move(g));
    } else if (m.role == "assistant") {
      ++own_turns;
      agent_spoke_last = false;
    } else if (m.content != kUserKickoff) {
      agent_turns.push_back(m.content);
      agent_spoke_last = true;
    }
  }
  const Goal* next = nullptr;
  for (const Goal& g : goals) {
    bool met = std::any_of(agent_turns.begin(), agent_turns.end(),
                           [&](const std::string& a) { return AcknowledgesGoal(a, g); });
    if (!met) {
      next = &g;
      break;
    }
  }
  if (next == nullptr) {
    if (style == UserStyle::kNeverConclude && !goals.empty()) {
      return "Can you check order " + goals.back().order_id + " one more time?";
    }
    return Pick(DoneMessages(), draws);
  }
  if (agent_spoke_last) {
    const std::string& last = agent_turns.back();
    if (Contains(last, "order number")) {
      return draws.Below(2) == 0 ? "It's " + next->order_id + "."
                                 : "The order number is " + next->order_id + ".";
    }
    if (Contains(last, "How much")) return AmountText(*next);
  }
  if (style != UserStyle::kStochastic) return RequestFor(*next, false, draws);
  if (own_turns == 0 && draws.Unit() < 0.25) return Pick(GreetingsOnly(), draws);
  bool divergent = draws.Unit() < 0.2;
  std::string request_text = RequestFor(*next, divergent, draws);
  if (own_turns == 0) {
    if (!StartsWith(request_text, "I ") && !StartsWith(request_text, "I'")) {
      request_text[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(request_text[0])));
    }
    request_text = Pick(Openers(), draws) + " " + request_text;
  }
  return request_text;
}

std::string MockJunctionReply(const ChatRequest& request, std::uint64_t draw) {
  constexpr std::string_view kMarker = "are at the following indices: [";
  std::vector<std::size_t> indices;
  for (const ChatMessage& m : request.messages) {
    std::size_t at = m.content.find(kMarker);
    if (at == std::string::npos) continue;
    std::size_t pos = at + kMarker.size();
    while (pos < m.content.size() && m.content[pos] != ']') {
      std::size_t end = DigitRun(m.content, pos);
      if (end > pos) {
        indices.push_back(static_cast<std::size_t>(
            ParseInt(std::string_view(m.content).substr(pos, end - pos)).value_or(0)));
        pos = end;
      } else {
        ++pos;
      }
    }
  }
  if (indices.empty()) return "I cannot tell which turn to change.";
  DrawStream draws(draw);
  static const std::vector<std::string> kReasons = {
      "Rewording this request could send the agent down a different tool path.",
      "The agent's next action depends heavily on how this turn is phrased.",
      "This turn sets the intent the agent acts on.",
  };
  std::size_t index = indices[draws.Below(indices.size())];
  return "Reason: " + Pick(kReasons, draws) + "\nIndex: " + std::to_string(index);
}

std::string MockCandidateReply(const ChatRequest& request, std::uint64_t draw) {
  std::vector<Goal> goals;
  std::string prompt;
  for (const ChatMessage& m : request.messages) {
    if (m.role == "system") {
      for (Goal& g : ParseGoals(m.content)) goals.push_back(std::move(g));
    } else {
      prompt = m.content;
    }
  }
  DrawStream draws(draw);
  if (goals.empty()) return "Could you help me with my order?";
  constexpr std::string_view kStep = "the user turn at step ";
  std::size_t step = 0;
  if (std::size_t at = prompt.find(kStep); at != std::string::npos) {
    std::size_t begin = at + kStep.size();
    step = static_cast<std::size_t>(
        ParseInt(std::string_view(prompt).substr(begin, DigitRun(prompt, begin) - begin))
            .value_or(0));
  }
  // Agent turns before the junction tell which goals were already handled.
  std::vector<std::string> agent_turns;
  std::size_t pos = 0;
  while ((pos = prompt.find("\nTurn ", pos)) != std::string::npos) {
    pos += 6;
    std::size_t end = DigitRun(prompt, pos);
    std::size_t turn = static_cast<std::size_t>(
        ParseInt(std::string_view(prompt).substr(pos, end - pos)).value_or(0));
    std::size_t eol = prompt.find('\n', end);
    std::string_view line = std::string_view(prompt).substr(
        end, eol == std::string::npos ? std::string::npos : eol - end);
    if (turn < step && StartsWith(line, " (assistant): ")) agent_turns.emplace_back(line);
  }
  const Goal* goal = nullptr;
  for (const Goal& g : goals) {
    bool met = std::any_of(agent_turns.begin(), agent_turns.end(),
                           [&](const std::string& a) { return AcknowledgesGoal(a, g); });
    if (!met) {
      goal = &g;
      break;
    }
  }
  if (goal == nullptr) goal = &goals[draws.Below(goals.size())];
  const auto& coop = CooperativePhrasings(goal->kind);
  const auto& divergent = DivergentPhrasings(goal->kind);
  std::size_t pick = draws.Below(coop.size() + divergent.size());
  const std::string& tmpl = pick < coop.size() ? coop[pick] : divergent[pick - coop.size()];
  return FillPhrasing(tmpl, *goal);
}

std::string MockJudgeReply(const ChatRequest& request) {
  std::string purpose;
  std::string message;
  for (const ChatMessage& m : request.messages) {
    if (m.role == "system") continue;
    std::size_t p = m.content.find("Task Purpose: ");
    std::size_t u = m.content.find("\nUser Message: ");
    if (p == std::string::npos || u == std::string::npos) continue;
    purpose = m.content.substr(p + 14, u - p - 14);
    std::size_t end = m.content.find("\nDoes this user message", u);
    message = m.content.substr(u + 15, end == std::string::npos ? std::string::npos : end - u - 15);
  }
  std::optional<std::string> id = FindOrderId(purpose);
  if (id && Contains(message, *id)) return "YES - the message still pursues order " + *id + ".";
  return "NO. The message no longer targets the order in the purpose.";
}

MockScript MockWorldScript(const MockWorldOptions& options) {
  MockScript script;
  script.seed = options.seed;
  script.charging = options.charging;
  script.failing_attempts = options.failing_attempts;
  UserStyle style = options.user_style;
  script.responders[RoleTag::kAgent] = [](const ChatRequest& r, std::uint64_t) {
    return MockAgentReply(r);
  };
  script.responders[RoleTag::kUser] = [style](const ChatRequest& r, std::uint64_t draw) {
    return MockUserReply(r, draw, style);
  };
  script.responders[RoleTag::kJunction] = MockJunctionReply;
  script.responders[RoleTag::kCandidate] = MockCandidateReply;
  script.responders[RoleTag::kJudge] = [](const ChatRequest& r, std::uint64_t) {
    return MockJudgeReply(r);
  };
  return script;
}

Providers MakeMockProviders(const MockWorldOptions& options) {
  auto provider = std::make_shared<MockChatProvider>(MockWorldScript(options));
  Providers p;
  p.agent = provider;
  p.user = provider;
  p.framework = provider;
  p.embedder = std::make_shared<HashingEmbedder>(options.embedding_dimension);
  return p;
}

}  // namespace divert
