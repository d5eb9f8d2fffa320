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

#include "divert/providers.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "divert/hash.h"

namespace divert {

std::string HexDigest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string_view RoleTagName(RoleTag tag) {
  switch (tag) {
    case RoleTag::kAgent: return "agent";
    case RoleTag::kUser: return "user";
    case RoleTag::kJunction: return "junction";
    case RoleTag::kCandidate: return "candidate";
    case RoleTag::kJudge: return "judge";
  }
  return "agent";
}

RoleTag ParseRoleTag(std::string_view name) {
  if (name == "agent") return RoleTag::kAgent;
  if (name == "user") return RoleTag::kUser;
  if (name == "junction") return RoleTag::kJunction;
  if (name == "candidate") return RoleTag::kCandidate;
  if (name == "judge") return RoleTag::kJudge;
  throw Error(ErrorCode::kParseError, "unknown role tag '" + std::string(name) + "'");
}

TokenUsage* LedgerBucket(TokenLedger& ledger, RoleTag tag) {
  switch (tag) {
    case RoleTag::kAgent: return &ledger.agent;
    case RoleTag::kUser: return &ledger.user;
    case RoleTag::kJunction: return &ledger.junction_overhead;
    case RoleTag::kCandidate: return &ledger.candidate_overhead;
    case RoleTag::kJudge: return nullptr;
  }
  return nullptr;
}

ChatResult ChatComplete(const ChatProvider& provider, const ChatRequest& request) {
  if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be finite and >= 0");
  }
  if (request.max_retries < 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_retries must be >= 0");
  }
  const int budget = std::max(1, request.max_retries);
  TokenUsage spent;
  std::string last_error;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    AttemptResult r = provider.Attempt(request, attempt);
    spent = AddUsage(spent, r.tokens);
    if (r.ok && !r.content.empty()) {
      return {std::move(r.content), spent, attempt};
    }
    last_error = r.ok ? "empty completion" : r.error;
  }
  throw ProviderError(std::string(RoleTagName(request.role_tag)) + " call failed after " +
                          std::to_string(budget) + " attempts: " + last_error,
                      budget, spent);
}

double UnitVector::Norm() const {
  double sum = 0.0;
  for (double c : components) sum += c * c;
  return std::sqrt(sum);
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ < 2) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be >= 2");
  }
}

UnitVector HashingEmbedder::Embed(std::string_view text) const {
  UnitVector out;
  out.components.assign(dimension_, 0.0);
  std::string word;
  bool any = false;
  auto flush = [&] {
    if (word.empty()) return;
    std::uint64_t h = Mix64(Fnv1a64(word));
    double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    out.components[h % dimension_] += sign;
    any = true;
    word.clear();
  };
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      word.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  double norm = out.Norm();
  if (!any || norm == 0.0) {
    // Degenerate text (or words that cancel out) maps to e1.
    std::fill(out.components.begin(), out.components.end(), 0.0);
    out.components[0] = 1.0;
    return out;
  }
  for (double& c : out.components) c /= norm;
  return out;
}

double CosineSimilarity(const UnitVector& a, const UnitVector& b) {
  if (a.components.size() != b.components.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "dimension mismatch: " + std::to_string(a.components.size()) +
                    " vs " + std::to_string(b.components.size()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.components.size(); ++i) {
    dot += a.components[i] * b.components[i];
  }
  return std::clamp(dot, -1.0, 1.0);
}

double CosineOfVectors(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument, "dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<std::string> WhitespaceTokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::uint64_t WhitespaceTokenCount(std::string_view text) {
  std::uint64_t count = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

Responder BankResponder(std::vector<std::string> bank) {
  if (bank.empty()) throw Error(ErrorCode::kInvalidArgument, "empty response bank");
  return [bank = std::move(bank)](const ChatRequest&, std::uint64_t draw) {
    return bank[draw % bank.size()];
  };
}

MockChatProvider::MockChatProvider(MockScript script) : script_(std::move(script)) {}

std::uint64_t MockChatProvider::DrawFor(const ChatRequest& request) const {
  std::uint64_t h = HashCombine(script_.seed, request.seed);
  h = HashCombine(h, static_cast<std::uint64_t>(request.role_tag));
  for (const ChatMessage& m : request.messages) {
    h = HashCombine(h, Fnv1a64(m.role));
    h = HashCombine(h, Fnv1a64(m.content));
  }
  return h;
}

TokenUsage MockChatProvider::Charge(RoleTag tag, const ChatRequest& request,
                                    std::string_view completion) const {
  auto it = script_.charging.find(tag);
  if (it != script_.charging.end() && it->second.kind == ChargingRule::Kind::kFixed) {
    return it->second.fixed;
  }
  TokenUsage usage;
  for (const ChatMessage& m : request.messages) {
    usage.prompt_tokens += WhitespaceTokenCount(m.content);
  }
  usage.completion_tokens = WhitespaceTokenCount(completion);
  return usage;
}

AttemptResult MockChatProvider::Attempt(const ChatRequest& request, int attempt) const {
  auto failing = script_.failing_attempts.find(request.role_tag);
  if (failing != script_.failing_attempts.end() && attempt <= failing->second) {
    TokenUsage usage = Charge(request.role_tag, request, "");
    usage.completion_tokens = 0;
    return {false, "", usage, "injected failure on attempt " + std::to_string(attempt)};
  }
  auto responder = script_.responders.find(request.role_tag);
  if (responder == script_.responders.end()) {
    return {false, "", {}, "no responder for role tag " +
                               std::string(RoleTagName(request.role_tag))};
  }
  // The draw ignores the attempt number so a retried call answers exactly
  // as an unretried one would.
  std::string content = responder->second(request, DrawFor(request));
  TokenUsage usage = Charge(request.role_tag, request, content);
  return {true, std::move(content), usage, ""};
}

AttemptResult RecordingChatProvider::Attempt(const ChatRequest& request,
                                             int attempt) const {
  AttemptResult r = inner_->Attempt(request, attempt);
  std::lock_guard<std::mutex> lock(mu_);
  entries_.push_back({request.role_tag, attempt, r.ok, r.tokens});
  return r;
}

std::vector<RecordingChatProvider::Entry> RecordingChatProvider::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

TokenUsage RecordingChatProvider::Total(RoleTag tag) const {
  std::lock_guard<std::mutex> lock(mu_);
  TokenUsage total;
  for (const Entry& e : entries_) {
    if (e.role_tag == tag) total = AddUsage(total, e.tokens);
  }
  return total;
}

}  // namespace divert
